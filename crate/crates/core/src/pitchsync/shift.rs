use std::collections::BTreeMap;

use super::plan::ShiftPlan;
use super::tracker::{track_frames, HOP_S};
use crate::audio::{resample_to_len, AudioClip, TARGET_RATE};
use crate::error::{Error, Result};
use crate::vocoder;

pub const MAX_SHIFT: i32 = 24;
pub const CROSSFADE_S: f64 = 0.010;

/// Constant shift of a whole signal: stretch by `2^(s/12)` then resample
/// back to the original length.
pub fn shift_samples(samples: &[f32], semitones: i32) -> Vec<f32> {
    if semitones == 0 {
        return samples.to_vec();
    }
    let factor = 2f64.powf(semitones as f64 / 12.0);
    let stretched = vocoder::stretch(samples, 1.0 / factor);
    resample_to_len(&stretched, samples.len())
}

/// Time-varying pitch shift following `plan`, with linear cross-fades at
/// segment boundaries. Output length equals input length.
pub fn apply_pitch_shift(clip: &AudioClip, plan: &ShiftPlan) -> Result<AudioClip> {
    clip.require_mono()?;
    clip.require_rate(TARGET_RATE)?;
    let frames = track_frames(clip.len(), clip.sample_rate);
    if plan.n_frames() != frames || plan.segments.first().is_some_and(|s| s.start != 0) {
        return Err(Error::Contract(format!(
            "shift plan covers {} frames, clip has {frames}",
            plan.n_frames()
        )));
    }
    if let Some(s) = plan.segments.iter().find(|s| s.shift.abs() > MAX_SHIFT) {
        return Err(Error::OutOfRange(format!("shift of {} semitones exceeds ±{MAX_SHIFT}", s.shift)));
    }
    if plan.is_identity() {
        return Ok(clip.clone());
    }
    let mut shifted: BTreeMap<i32, Vec<f32>> = BTreeMap::new();
    for s in &plan.segments {
        shifted.entry(s.shift).or_insert_with(|| shift_samples(&clip.samples, s.shift));
    }
    let len = clip.len();
    let hop = HOP_S * clip.sample_rate as f64;
    let bound = |frame: usize| ((frame as f64 * hop).round() as usize).min(len);
    let mut out = vec![0.0f32; len];
    let first = &shifted[&plan.segments[0].shift];
    out.copy_from_slice(first);
    let fade = (CROSSFADE_S * clip.sample_rate as f64).round() as usize;
    for s in &plan.segments[1..] {
        let src = &shifted[&s.shift];
        let b = bound(s.start);
        let lo = b.saturating_sub(fade / 2);
        let hi = (lo + fade).min(len);
        for i in lo..hi {
            let w = (i - lo) as f32 / fade as f32;
            out[i] = (1.0 - w) * out[i] + w * src[i];
        }
        out[hi..].copy_from_slice(&src[hi..]);
    }
    Ok(AudioClip::mono(out, clip.sample_rate))
}
