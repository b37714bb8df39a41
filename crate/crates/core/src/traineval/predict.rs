use polymix_nn::{Model, Tensor};

use crate::audio::{segment_clip, AudioClip};
use crate::error::{Error, Result};
use crate::features::spectrogram;

/// Mean of per-second scores over the whole seconds of `track` (remainder
/// dropped). The track must be mono at the working rate.
pub fn predict_track(model: &Model<f32>, track: &AudioClip) -> Result<Vec<f64>> {
    if track.duration() < 1.0 {
        return Err(Error::TooShort {
            seconds: track.duration(),
            needed: 1.0,
        });
    }
    let segments = segment_clip(track, 1.0)?;
    let input = model.config().input;
    let mut x = Vec::with_capacity(segments.len() * input.iter().product::<usize>());
    for s in &segments {
        x.extend(spectrogram(s)?);
    }
    let batch = Tensor::from_vec(&[segments.len(), input[0], input[1], input[2]], x)?;
    let scores = model.predict(&batch)?;
    Ok(mean_rows(scores.data(), model.config().classes))
}

/// Column means of a row-major matrix with `classes` columns.
pub fn mean_rows(scores: &[f32], classes: usize) -> Vec<f64> {
    let rows = scores.len() / classes;
    (0..classes)
        .map(|k| (0..rows).map(|r| scores[r * classes + k] as f64).sum::<f64>() / rows as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_means() {
        let m = mean_rows(&[0.8, 0.2, 0.6, 0.4], 2);
        assert!((m[0] - 0.7).abs() < 1e-7 && (m[1] - 0.3).abs() < 1e-7);
    }
}
