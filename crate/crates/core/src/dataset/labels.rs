use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const NUM_CLASSES: usize = 11;

/// Instrument classes. Discriminants are the canonical index used by label
/// vectors, model outputs, feature stores and prediction files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Instrument {
    Cel = 0,
    Cla,
    Flu,
    Gac,
    Gel,
    Org,
    Pia,
    Sax,
    Tru,
    Vio,
    Voi,
}

impl Instrument {
    pub const ALL: [Instrument; NUM_CLASSES] = [
        Instrument::Cel,
        Instrument::Cla,
        Instrument::Flu,
        Instrument::Gac,
        Instrument::Gel,
        Instrument::Org,
        Instrument::Pia,
        Instrument::Sax,
        Instrument::Tru,
        Instrument::Vio,
        Instrument::Voi,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Instrument> {
        Self::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        CODES[self.index()]
    }
}

/// Canonical label order.
pub const CODES: [&str; NUM_CLASSES] = [
    "cel", "cla", "flu", "gac", "gel", "org", "pia", "sax", "tru", "vio", "voi",
];

impl FromStr for Instrument {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CODES
            .iter()
            .position(|c| *c == s)
            .and_then(Instrument::from_index)
            .ok_or_else(|| format!("unknown instrument label `{s}`"))
    }
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Genre {
    Classical,
    PopRock,
    JazzBlues,
    CountryFolk,
}

impl Genre {
    pub const ALL: [Genre; 4] = [Genre::Classical, Genre::PopRock, Genre::JazzBlues, Genre::CountryFolk];

    pub fn name(self) -> &'static str {
        match self {
            Genre::Classical => "classical",
            Genre::PopRock => "pop_rock",
            Genre::JazzBlues => "jazz_blues",
            Genre::CountryFolk => "country_folk",
        }
    }
}

impl FromStr for Genre {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Genre::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| format!("unknown genre label `{s}`"))
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Multi-hot instrument indicator in canonical order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelVector(u16);

impl LabelVector {
    pub fn empty() -> Self {
        LabelVector(0)
    }

    pub fn single(inst: Instrument) -> Self {
        LabelVector(1 << inst.index())
    }

    pub fn from_instruments(insts: &[Instrument]) -> Self {
        insts.iter().fold(Self::empty(), |acc, &i| acc.union(Self::single(i)))
    }

    pub fn union(self, other: Self) -> Self {
        LabelVector(self.0 | other.0)
    }

    pub fn contains(self, inst: Instrument) -> bool {
        self.get(inst.index())
    }

    pub fn get(self, index: usize) -> bool {
        index < NUM_CLASSES && self.0 & (1 << index) != 0
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn instruments(self) -> Vec<Instrument> {
        Instrument::ALL.into_iter().filter(|&i| self.contains(i)).collect()
    }

    /// One byte (0/1) per class.
    pub fn to_bytes(self) -> [u8; NUM_CLASSES] {
        std::array::from_fn(|i| self.get(i) as u8)
    }

    /// Rejects anything but 0/1 entries.
    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != NUM_CLASSES {
            return None;
        }
        bytes.iter().enumerate().try_fold(Self::empty(), |acc, (i, &b)| match b {
            0 => Some(acc),
            1 => Some(LabelVector(acc.0 | 1 << i)),
            _ => None,
        })
    }

    pub fn to_f32(self) -> [f32; NUM_CLASSES] {
        std::array::from_fn(|i| self.get(i) as u8 as f32)
    }
}

impl fmt::Display for LabelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let codes: Vec<&str> = self.instruments().iter().map(|i| i.code()).collect();
        f.write_str(&codes.join("+"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_is_alphabetical() {
        let mut sorted = CODES;
        sorted.sort();
        assert_eq!(sorted, CODES);
        for (i, inst) in Instrument::ALL.iter().enumerate() {
            assert_eq!(inst.index(), i);
            assert_eq!(inst.code().parse::<Instrument>().unwrap(), *inst);
        }
    }

    #[test]
    fn harp_is_not_an_instrument() {
        assert!("harp".parse::<Instrument>().is_err());
    }

    #[test]
    fn label_bytes_round_trip() {
        let v = LabelVector::from_instruments(&[Instrument::Cel, Instrument::Voi]);
        assert_eq!(v.to_bytes(), [1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1]);
        assert_eq!(LabelVector::from_bytes(&v.to_bytes()), Some(v));
        assert_eq!(v.to_string(), "cel+voi");
        assert_eq!(LabelVector::from_bytes(&[2; 11]), None);
    }
}
