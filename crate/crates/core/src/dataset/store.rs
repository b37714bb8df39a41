//! Single-file feature store, little-endian:
//!
//! ```text
//! "CQTS"  u16 version  u32 count  u32 rows  u32 cols
//! f32 features[count][rows][cols]     (row-major)
//! u8  labels[count][11]               (0/1, canonical class order)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::labels::{LabelVector, NUM_CLASSES};
use crate::error::{Error, Result};

pub const STORE_MAGIC: &[u8; 4] = b"CQTS";
pub const STORE_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStore {
    pub rows: usize,
    pub cols: usize,
    features: Vec<f32>,
    labels: Vec<LabelVector>,
}

impl FeatureStore {
    pub fn new(rows: usize, cols: usize) -> Self {
        FeatureStore {
            rows,
            cols,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, feature: &[f32], labels: LabelVector) -> Result<()> {
        if feature.len() != self.rows * self.cols {
            return Err(Error::Contract(format!(
                "feature has {} values, store holds {}x{}",
                feature.len(),
                self.rows,
                self.cols
            )));
        }
        self.features.extend_from_slice(feature);
        self.labels.push(labels);
        Ok(())
    }

    /// Append every sample of `other` (same dimensions).
    pub fn extend(&mut self, other: &FeatureStore) -> Result<()> {
        if (other.rows, other.cols) != (self.rows, self.cols) {
            return Err(Error::Contract(format!(
                "cannot merge {}x{} store into {}x{}",
                other.rows, other.cols, self.rows, self.cols
            )));
        }
        self.features.extend_from_slice(&other.features);
        self.labels.extend_from_slice(&other.labels);
        Ok(())
    }

    /// Values per sample (`rows * cols`).
    pub fn sample_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature(&self, i: usize) -> &[f32] {
        let n = self.rows * self.cols;
        &self.features[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> LabelVector {
        self.labels[i]
    }

    pub fn labels(&self) -> &[LabelVector] {
        &self.labels
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> FeatureStore {
        let mut out = FeatureStore::new(self.rows, self.cols);
        for &i in indices {
            out.features.extend_from_slice(self.feature(i));
            out.labels.push(self.labels[i]);
        }
        out
    }

    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        out.write_all(STORE_MAGIC)?;
        out.write_all(&STORE_VERSION.to_le_bytes())?;
        for v in [self.len(), self.rows, self.cols] {
            out.write_all(&(v as u32).to_le_bytes())?;
        }
        for v in &self.features {
            out.write_all(&v.to_le_bytes())?;
        }
        for l in &self.labels {
            out.write_all(&l.to_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(input: &mut impl Read) -> Result<FeatureStore> {
        let corrupt = |m: &str| Error::CorruptStore(m.to_string());
        let mut head = [0u8; 18];
        input.read_exact(&mut head).map_err(|_| corrupt("truncated header"))?;
        if &head[..4] != STORE_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != STORE_VERSION {
            return Err(Error::CorruptStore(format!("unsupported version {version}")));
        }
        let word = |o: usize| u32::from_le_bytes([head[o], head[o + 1], head[o + 2], head[o + 3]]) as usize;
        let (count, rows, cols) = (word(6), word(10), word(14));
        if rows == 0 || cols == 0 {
            return Err(corrupt("zero dimension"));
        }
        let n = count
            .checked_mul(rows * cols)
            .ok_or_else(|| corrupt("dimension overflow"))?;
        let mut raw = Vec::new();
        input.read_to_end(&mut raw).map_err(|_| corrupt("read failure"))?;
        let expected = n * 4 + count * NUM_CLASSES;
        if raw.len() != expected {
            return Err(Error::CorruptStore(format!(
                "payload is {} bytes, header implies {expected}",
                raw.len()
            )));
        }
        let features = raw[..n * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let labels = raw[n * 4..]
            .chunks_exact(NUM_CLASSES)
            .map(|c| LabelVector::from_bytes(c).ok_or_else(|| corrupt("label bytes must be 0 or 1")))
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureStore {
            rows,
            cols,
            features,
            labels,
        })
    }
}

pub fn write_store(store: &FeatureStore, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    store
        .write_to(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_store(path: &Path) -> Result<FeatureStore> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    FeatureStore::read_from(&mut BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::labels::Instrument;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            rows in 1usize..6,
            cols in 1usize..6,
            samples in proptest::collection::vec((any::<u32>(), 1u16..2048), 0..8),
        ) {
            let mut store = FeatureStore::new(rows, cols);
            for (seed, bits) in &samples {
                let feature: Vec<f32> = (0..rows * cols)
                    .map(|i| f32::from_bits(seed.wrapping_mul(2_654_435_761).wrapping_add(i as u32) & 0x7f7f_ffff))
                    .collect();
                let label = LabelVector::from_bytes(&std::array::from_fn::<u8, 11, _>(|i| ((bits >> i) & 1) as u8)).unwrap();
                store.push(&feature, label).unwrap();
            }
            let mut bytes = Vec::new();
            store.write_to(&mut bytes).unwrap();
            let back = FeatureStore::read_from(&mut bytes.as_slice()).unwrap();
            prop_assert_eq!(back.len(), store.len());
            for i in 0..store.len() {
                let a: Vec<u32> = store.feature(i).iter().map(|v| v.to_bits()).collect();
                let b: Vec<u32> = back.feature(i).iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(a, b);
                prop_assert_eq!(store.label(i), back.label(i));
            }
        }
    }

    #[test]
    fn empty_store_round_trips() {
        let store = FeatureStore::new(96, 87);
        let mut bytes = Vec::new();
        store.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 18);
        assert_eq!(FeatureStore::read_from(&mut bytes.as_slice()).unwrap(), store);
    }

    #[test]
    fn corrupt_inputs() {
        let mut store = FeatureStore::new(2, 2);
        store
            .push(&[1.0, 2.0, 3.0, 4.0], LabelVector::single(Instrument::Org))
            .unwrap();
        let mut bytes = Vec::new();
        store.write_to(&mut bytes).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[..4].copy_from_slice(b"NOPE");
        assert!(matches!(FeatureStore::read_from(&mut bad_magic.as_slice()), Err(Error::CorruptStore(_))));

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(FeatureStore::read_from(&mut &truncated[..]), Err(Error::CorruptStore(_))));

        let mut wrong_dims = bytes.clone();
        wrong_dims[10] = 3;
        assert!(matches!(FeatureStore::read_from(&mut wrong_dims.as_slice()), Err(Error::CorruptStore(_))));

        assert!(store.push(&[1.0], LabelVector::empty()).is_err());
    }
}
