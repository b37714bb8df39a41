//! Pairing and mixing across instrument classes.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{load_wav, overlay, segment_clip, standardize, AudioClip, TARGET_RATE, TARGET_RMS};
use crate::dataset::{load_manifest, resolve, Genre, Instrument, LabelVector, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::pitchsync::{self, track_frames, track_pitch, PitchTrack, ShiftPlan};
use crate::temposync::{self, estimate_bpm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixStrategy {
    Random,
    Genre,
    Tempo,
    Pitch,
}

impl MixStrategy {
    pub const ALL: [MixStrategy; 4] = [MixStrategy::Random, MixStrategy::Genre, MixStrategy::Tempo, MixStrategy::Pitch];

    pub fn name(self) -> &'static str {
        match self {
            MixStrategy::Random => "random",
            MixStrategy::Genre => "genre",
            MixStrategy::Tempo => "tempo",
            MixStrategy::Pitch => "pitch",
        }
    }
}

impl FromStr for MixStrategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        MixStrategy::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mixing strategy `{s}` (expected random, genre, tempo or pitch)"))
    }
}

impl fmt::Display for MixStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A standardized clip with its provenance id.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceClip {
    pub id: String,
    pub instrument: Instrument,
    pub genre: Genre,
    pub clip: AudioClip,
}

/// Standardized monophonic parents (typically 3 s each).
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub parents: Vec<SourceClip>,
}

impl Corpus {
    /// Load and standardize every record of a manifest. Silent clips are
    /// skipped and returned by id.
    pub fn load(manifest: &Path) -> Result<(Corpus, Vec<String>)> {
        let records = load_manifest(manifest)?;
        let loaded: Vec<Result<Option<SourceClip>>> = records
            .par_iter()
            .map(|r| {
                let raw = load_wav(&resolve(manifest, &r.path))?;
                match standardize(&raw, TARGET_RATE, TARGET_RMS) {
                    Ok(clip) => Ok(Some(SourceClip {
                        id: r.path.to_string_lossy().into_owned(),
                        instrument: r.instrument,
                        genre: r.genre,
                        clip,
                    })),
                    Err(Error::SilentClip) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect();
        let mut parents = Vec::new();
        let mut skipped = Vec::new();
        for (r, l) in records.iter().zip(loaded) {
            match l? {
                Some(c) => parents.push(c),
                None => {
                    log::warn!("skipping silent clip {}", r.path.display());
                    skipped.push(r.path.to_string_lossy().into_owned());
                }
            }
        }
        Ok((Corpus { parents }, skipped))
    }

    /// One-second segments of every parent, ids suffixed `#k`.
    pub fn segments(&self) -> Vec<SourceClip> {
        self.parents
            .iter()
            .flat_map(|p| {
                segment_clip(&p.clip, 1.0)
                    .unwrap_or_default()
                    .into_iter()
                    .enumerate()
                    .map(|(k, clip)| SourceClip {
                        id: format!("{}#{k}", p.id),
                        instrument: p.instrument,
                        genre: p.genre,
                        clip,
                    })
            })
            .collect()
    }
}

/// Indices of `items` per instrument class.
fn by_class(items: &[SourceClip]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); NUM_CLASSES];
    for (i, s) in items.iter().enumerate() {
        out[s.instrument.index()].push(i);
    }
    out
}

/// Shuffle both sides and zip: `min(|a|, |b|)` pairs, no id reused.
pub fn pair_random<T: Copy>(a: &[T], b: &[T], rng: &mut impl Rng) -> Vec<(T, T)> {
    if a.is_empty() || b.is_empty() {
        log::warn!("pairing with an empty set yields no pairs");
        return Vec::new();
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.shuffle(rng);
    b.shuffle(rng);
    a.into_iter().zip(b).collect()
}

/// Random pairing within each genre bucket, buckets in canonical order.
pub fn pair_genre<T: Copy>(a: &[T], b: &[T], genre_of: impl Fn(T) -> Genre, rng: &mut impl Rng) -> Vec<(T, T)> {
    let mut out = Vec::new();
    for g in Genre::ALL {
        let ga: Vec<T> = a.iter().copied().filter(|&x| genre_of(x) == g).collect();
        let gb: Vec<T> = b.iter().copied().filter(|&x| genre_of(x) == g).collect();
        if !ga.is_empty() && !gb.is_empty() {
            out.extend(pair_random(&ga, &gb, rng));
        }
    }
    out
}

/// What was done to the second source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MixDetail {
    Overlay,
    Pitch { plan: ShiftPlan },
    Tempo { bpm_a: f64, bpm_b: f64, ratio: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixedRecord {
    pub clip: AudioClip,
    pub labels: LabelVector,
    pub sources: (String, String),
    pub strategy: MixStrategy,
    pub detail: MixDetail,
}

/// Manifest line for a mixed WAV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixProvenance {
    pub path: std::path::PathBuf,
    pub labels: Vec<Instrument>,
    pub sources: [String; 2],
    pub strategy: MixStrategy,
    pub detail: MixDetail,
}

impl MixedRecord {
    pub fn provenance(&self, path: std::path::PathBuf) -> MixProvenance {
        MixProvenance {
            path,
            labels: self.labels.instruments(),
            sources: [self.sources.0.clone(), self.sources.1.clone()],
            strategy: self.strategy,
            detail: self.detail.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub sources: [String; 2],
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct MixOutput {
    pub records: Vec<MixedRecord>,
    pub skipped: Vec<SkippedPair>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixConfig {
    pub strategy: MixStrategy,
    pub seed: u64,
    /// Upper bound on mixed records per class pair.
    pub max_per_pair: Option<usize>,
}

/// Unordered class pairs `(i, j)`, `i < j`, both present.
fn class_pairs(groups: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let present: Vec<usize> = (0..NUM_CLASSES).filter(|&c| !groups[c].is_empty()).collect();
    let mut out = Vec::new();
    for (x, &i) in present.iter().enumerate() {
        for &j in &present[x + 1..] {
            out.push((i, j));
        }
    }
    out
}

pub fn build_mixed_dataset(corpus: &Corpus, cfg: &MixConfig) -> Result<MixOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match cfg.strategy {
        MixStrategy::Tempo => mix_parents(corpus, cfg, &mut rng),
        _ => mix_segments(corpus, cfg, &mut rng),
    }
}

fn check_classes(groups: &[Vec<usize>]) -> Result<()> {
    if groups.iter().filter(|g| !g.is_empty()).count() < 2 {
        return Err(Error::Contract("mixing needs at least two instrument classes".into()));
    }
    Ok(())
}

fn mix_segments(corpus: &Corpus, cfg: &MixConfig, rng: &mut ChaCha8Rng) -> Result<MixOutput> {
    let segs = corpus.segments();
    let groups = by_class(&segs);
    check_classes(&groups)?;
    let mut pairs = Vec::new();
    for (i, j) in class_pairs(&groups) {
        let mut p = match cfg.strategy {
            MixStrategy::Genre => pair_genre(&groups[i], &groups[j], |x| segs[x].genre, rng),
            _ => pair_random(&groups[i], &groups[j], rng),
        };
        if let Some(cap) = cfg.max_per_pair {
            p.truncate(cap);
        }
        pairs.extend(p);
    }
    let tracks: HashMap<usize, PitchTrack> = if cfg.strategy == MixStrategy::Pitch {
        let used: BTreeSet<usize> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        let used: Vec<usize> = used.into_iter().collect();
        let computed = used
            .par_iter()
            .map(|&i| track_pitch(&segs[i].clip))
            .collect::<Result<Vec<_>>>()?;
        used.into_iter().zip(computed).collect()
    } else {
        HashMap::new()
    };
    let outcomes = pairs
        .par_iter()
        .map(|&(a, b)| {
            let (sa, sb) = (&segs[a], &segs[b]);
            let (clip, detail) = match cfg.strategy {
                MixStrategy::Pitch => match pitchsync::mix_with_tracks(&sa.clip, &sb.clip, &tracks[&a], &tracks[&b]) {
                    Ok((clip, plan)) => (clip, MixDetail::Pitch { plan }),
                    // An implausible interval between the two sources.
                    Err(Error::OutOfRange(reason)) => {
                        return Ok(Err(SkippedPair {
                            sources: [sa.id.clone(), sb.id.clone()],
                            reason,
                        }))
                    }
                    Err(e) => return Err(e),
                },
                _ => (overlay(&sa.clip, &sb.clip)?, MixDetail::Overlay),
            };
            Ok(Ok(MixedRecord {
                clip,
                labels: LabelVector::single(sa.instrument).union(LabelVector::single(sb.instrument)),
                sources: (sa.id.clone(), sb.id.clone()),
                strategy: cfg.strategy,
                detail,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = MixOutput::default();
    for o in outcomes {
        match o {
            Ok(r) => out.records.push(r),
            Err(s) => out.skipped.push(s),
        }
    }
    Ok(out)
}

fn mix_parents(corpus: &Corpus, cfg: &MixConfig, rng: &mut ChaCha8Rng) -> Result<MixOutput> {
    let parents = &corpus.parents;
    let groups = by_class(parents);
    check_classes(&groups)?;
    let mut pairs = Vec::new();
    for (i, j) in class_pairs(&groups) {
        let mut p = pair_random(&groups[i], &groups[j], rng);
        if let Some(cap) = cfg.max_per_pair {
            p.truncate(cap.div_ceil(3));
        }
        pairs.push(p);
    }
    let used: BTreeSet<usize> = pairs.iter().flatten().flat_map(|&(a, b)| [a, b]).collect();
    let used: Vec<usize> = used.into_iter().collect();
    let bpms: HashMap<usize, Option<f64>> = used
        .par_iter()
        .map(|&i| match estimate_bpm(&parents[i].clip) {
            Ok(t) => Ok((i, Some(t.bpm))),
            Err(Error::NoTempo) => Ok((i, None)),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();
    let mixed: Vec<Vec<std::result::Result<Vec<MixedRecord>, SkippedPair>>> = pairs
        .par_iter()
        .map(|class_pairs| {
            class_pairs
                .iter()
                .map(|&(a, b)| {
                    let (pa, pb) = (&parents[a], &parents[b]);
                    let sources = [pa.id.clone(), pb.id.clone()];
                    let (Some(bpm_a), Some(bpm_b)) = (bpms[&a], bpms[&b]) else {
                        return Err(SkippedPair {
                            sources,
                            reason: "no tempo detected".into(),
                        });
                    };
                    let m = temposync::mix_with_tempi(&pa.clip, &pb.clip, bpm_a, bpm_b).map_err(|e| SkippedPair {
                        sources: sources.clone(),
                        reason: e.to_string(),
                    })?;
                    let labels = LabelVector::single(pa.instrument).union(LabelVector::single(pb.instrument));
                    Ok(m.segments
                        .into_iter()
                        .enumerate()
                        .map(|(k, clip)| MixedRecord {
                            clip,
                            labels,
                            sources: (format!("{}#{k}", pa.id), format!("{}#{k}", pb.id)),
                            strategy: MixStrategy::Tempo,
                            detail: MixDetail::Tempo {
                                bpm_a,
                                bpm_b,
                                ratio: m.ratio,
                            },
                        })
                        .collect())
                })
                .collect()
        })
        .collect();
    let mut out = MixOutput::default();
    for class_pair in mixed {
        let mut records = Vec::new();
        for r in class_pair {
            match r {
                Ok(v) => records.extend(v),
                Err(s) => {
                    log::warn!("skipped tempo pair {} + {}: {}", s.sources[0], s.sources[1], s.reason);
                    out.skipped.push(s);
                }
            }
        }
        if let Some(cap) = cfg.max_per_pair {
            records.truncate(cap);
        }
        out.records.extend(records);
    }
    Ok(out)
}

pub const AUGMENT_SHIFTS: [i32; 6] = [-6, -4, -2, 2, 4, 6];

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedRecord {
    pub clip: AudioClip,
    pub labels: LabelVector,
    pub source: String,
    pub shift: i32,
}

/// Single-label control set: `count` sources drawn in reshuffled rounds (so
/// no source is used more than `ceil(count / n)` times), each shifted by a
/// uniformly drawn value from `semitones`.
pub fn pitch_shift_augment(sources: &[SourceClip], semitones: &[i32], count: usize, seed: u64) -> Result<Vec<AugmentedRecord>> {
    if let Some(s) = semitones.iter().find(|s| **s != 0 && !AUGMENT_SHIFTS.contains(s)) {
        return Err(Error::OutOfRange(format!("augmentation shift {s} not in ±2, ±4, ±6")));
    }
    if semitones.is_empty() || sources.is_empty() {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = Vec::with_capacity(count);
    let mut order: Vec<usize> = (0..sources.len()).collect();
    while picks.len() < count {
        order.shuffle(&mut rng);
        for &i in order.iter().take(count - picks.len()) {
            picks.push((i, semitones[rng.gen_range(0..semitones.len())]));
        }
    }
    picks
        .par_iter()
        .map(|&(i, shift)| {
            let s = &sources[i];
            let plan = ShiftPlan::constant(track_frames(s.clip.len(), s.clip.sample_rate), shift);
            Ok(AugmentedRecord {
                clip: pitchsync::apply_pitch_shift(&s.clip, &plan)?,
                labels: LabelVector::single(s.instrument),
                source: s.id.clone(),
                shift,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_pairing_counts() {
        let a: Vec<usize> = (0..300).collect();
        let b: Vec<usize> = (1000..1200).collect();
        let pairs = pair_random(&a, &b, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(pairs.len(), 200);
        let left: BTreeSet<_> = pairs.iter().map(|p| p.0).collect();
        let right: BTreeSet<_> = pairs.iter().map(|p| p.1).collect();
        assert_eq!((left.len(), right.len()), (200, 200));
        assert_eq!(pairs, pair_random(&a, &b, &mut ChaCha8Rng::seed_from_u64(1)));
        assert_eq!(pair_random(&[1], &[2], &mut ChaCha8Rng::seed_from_u64(0)), vec![(1, 2)]);
        assert!(pair_random::<usize>(&[], &[2], &mut ChaCha8Rng::seed_from_u64(0)).is_empty());
    }

    #[test]
    fn genre_buckets() {
        // A: 5 classical, 3 jazz; B: 4 classical.
        let genre = |x: usize| if x < 5 || (100..104).contains(&x) { Genre::Classical } else { Genre::JazzBlues };
        let a: Vec<usize> = (0..8).collect();
        let b: Vec<usize> = (100..104).collect();
        let pairs = pair_genre(&a, &b, genre, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(pairs.len(), 4);
        assert!(pairs.iter().all(|&(x, y)| genre(x) == Genre::Classical && genre(y) == Genre::Classical));
        let disjoint = pair_genre(&[5, 6], &[100, 101], genre, &mut ChaCha8Rng::seed_from_u64(2));
        assert!(disjoint.is_empty());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in MixStrategy::ALL {
            assert_eq!(s.name().parse::<MixStrategy>().unwrap(), s);
        }
        assert!("chroma".parse::<MixStrategy>().is_err());
    }
}
