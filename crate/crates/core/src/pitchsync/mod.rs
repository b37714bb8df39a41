//! Pitch-synchronized mixing: track both clips, shift the second onto the
//! first's pitch contour, overlay.

mod plan;
mod shift;
mod tracker;

pub use plan::{
    compute_shift_track, median_filter, merge_segments, run_lengths, smooth_shift_track, ShiftPlan, ShiftSegment,
    MEDIAN_KERNEL, MIN_SEGMENT_FRAMES,
};
pub use shift::{apply_pitch_shift, shift_samples, CROSSFADE_S, MAX_SHIFT};
pub use tracker::{cents, track_frames, track_pitch, PitchTrack, HOP_S, WINDOW_S, YIN_THRESHOLD};

use crate::audio::{overlay, AudioClip};
use crate::error::Result;

/// Plan that moves `b` onto `a`'s pitch.
pub fn plan_for(a: &PitchTrack, b: &PitchTrack) -> ShiftPlan {
    smooth_shift_track(&compute_shift_track(a, b))
}

pub fn mix_pitch_sync(a: &AudioClip, b: &AudioClip) -> Result<(AudioClip, ShiftPlan)> {
    mix_with_tracks(a, b, &track_pitch(a)?, &track_pitch(b)?)
}

/// As [`mix_pitch_sync`] with precomputed pitch tracks.
pub fn mix_with_tracks(a: &AudioClip, b: &AudioClip, ta: &PitchTrack, tb: &PitchTrack) -> Result<(AudioClip, ShiftPlan)> {
    let plan = if ta.is_empty() {
        ShiftPlan::constant(track_frames(b.len(), b.sample_rate), 0)
    } else {
        plan_for(ta, tb)
    };
    let shifted = apply_pitch_shift(b, &plan)?;
    Ok((overlay(a, &shifted)?, plan))
}
