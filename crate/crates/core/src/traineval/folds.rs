use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{LabelVector, NUM_CLASSES};
use crate::error::{Error, Result};

/// Stratified round-robin fold assignment. Samples are grouped by label
/// vector, each group shuffled, and folds dealt out by a counter that runs
/// across groups, so every label pattern (and every class of single-label
/// data) is spread with per-fold counts differing by at most one.
pub fn make_folds(labels: &[LabelVector], k: usize, seed: u64) -> Result<Vec<u8>> {
    if k < 2 || k > u8::MAX as usize {
        return Err(Error::Stratification(format!("fold count {k} must be in 2..=255")));
    }
    let mut class_counts = [0usize; NUM_CLASSES];
    for l in labels {
        for (c, n) in class_counts.iter_mut().enumerate() {
            *n += l.get(c) as usize;
        }
    }
    if let Some(c) = (0..NUM_CLASSES).find(|&c| class_counts[c] > 0 && class_counts[c] < k) {
        return Err(Error::Stratification(format!(
            "class {} has {} samples, fewer than {k} folds",
            crate::dataset::CODES[c],
            class_counts[c]
        )));
    }
    let mut groups: BTreeMap<LabelVector, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0u8; labels.len()];
    let mut counter = 0usize;
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[i] = (counter % k) as u8;
            counter += 1;
        }
    }
    Ok(folds)
}

/// Indices whose fold equals / differs from `fold`.
pub fn split_indices(folds: &[u8], fold: u8) -> (Vec<usize>, Vec<usize>) {
    (0..folds.len()).partition(|&i| folds[i] != fold)
}
