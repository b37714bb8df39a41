//! Tempo estimation, time stretching and the tempo-synchronized mixer.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{overlay, segment_clip, AudioClip, TARGET_RATE};
use crate::error::{Error, Result};
use crate::vocoder;

pub const BPM_MIN: f64 = 60.0;
pub const BPM_MAX: f64 = 180.0;
pub const ONSET_WINDOW: usize = 2048;
pub const ONSET_HOP: usize = 512;
pub const MIN_STRETCH: f64 = 0.5;
pub const MAX_STRETCH: f64 = 2.0;
/// Metrical alternatives this close to the best peak defer to the one nearest 120 BPM.
pub const OCTAVE_TOLERANCE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TempoEstimate {
    pub bpm: f64,
    pub strength: f64,
}

/// Half-wave-rectified spectral flux, lightly smoothed and mean-subtracted. One value per STFT
/// frame after the first.
pub fn onset_envelope(samples: &[f32]) -> Vec<f64> {
    if samples.len() < ONSET_WINDOW {
        return Vec::new();
    }
    let frames = 1 + (samples.len() - ONSET_WINDOW) / ONSET_HOP;
    let window: Vec<f64> = (0..ONSET_WINDOW)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / ONSET_WINDOW as f64).cos())
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(ONSET_WINDOW);
    let bins = ONSET_WINDOW / 2 + 1;
    let mut prev = vec![0.0; bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); ONSET_WINDOW];
    let mut env = Vec::with_capacity(frames.saturating_sub(1));
    for t in 0..frames {
        let start = t * ONSET_HOP;
        for i in 0..ONSET_WINDOW {
            buf[i] = Complex64::new(samples[start + i] as f64 * window[i], 0.0);
        }
        fft.process(&mut buf);
        let mut flux = 0.0;
        for k in 0..bins {
            let m = buf[k].norm();
            if t > 0 {
                flux += (m - prev[k]).max(0.0);
            }
            prev[k] = m;
        }
        if t > 0 {
            env.push(flux);
        }
    }
    let env = smooth(&env);
    let mean = env.iter().sum::<f64>() / env.len().max(1) as f64;
    env.iter().map(|v| v - mean).collect()
}

/// Triangular 5-tap smoothing; onsets falling between frames would otherwise
/// split their energy across alternating lags.
fn smooth(env: &[f64]) -> Vec<f64> {
    const TAPS: [f64; 5] = [1.0, 2.0, 3.0, 2.0, 1.0];
    (0..env.len())
        .map(|t| {
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for (j, w) in TAPS.iter().enumerate() {
                if let Some(&v) = (t + j).checked_sub(2).and_then(|i| env.get(i)) {
                    acc += w * v;
                    wsum += w;
                }
            }
            acc / wsum
        })
        .collect()
}

/// Unbiased autocorrelation at a fractional lag, by linear interpolation.
fn autocorr(env: &[f64], lag: f64) -> f64 {
    let n = env.len();
    let whole = lag.floor() as usize;
    let frac = lag - whole as f64;
    if whole + 1 >= n {
        return 0.0;
    }
    let count = n - whole - 1;
    let sum: f64 = (0..count)
        .map(|t| env[t] * ((1.0 - frac) * env[t + whole] + frac * env[t + whole + 1]))
        .sum();
    sum / count as f64
}

fn lag_to_bpm(lag: f64, frame_rate: f64) -> f64 {
    60.0 * frame_rate / lag
}

/// Fractional lag within ±1 of `lag` maximizing the mean autocorrelation
/// over its multiples (up to half the envelope), with the autocorrelation at
/// that lag.
fn refine(env: &[f64], lag: f64) -> (f64, f64) {
    let comb = |l: f64| {
        let m = ((env.len() as f64 / 2.0) / l).floor().max(1.0) as usize;
        (1..=m).map(|i| autocorr(env, l * i as f64)).sum::<f64>() / m as f64
    };
    let mut best = (lag, comb(lag));
    for i in -100..=100 {
        let l = lag + i as f64 * 0.01;
        if l <= 1.0 {
            continue;
        }
        let c = comb(l);
        if c > best.1 {
            best = (l, c);
        }
    }
    (best.0, autocorr(env, best.0))
}

pub fn estimate_bpm(clip: &AudioClip) -> Result<TempoEstimate> {
    clip.require_mono()?;
    clip.require_rate(TARGET_RATE)?;
    if clip.duration() < 2.0 {
        return Err(Error::TooShort {
            seconds: clip.duration(),
            needed: 2.0,
        });
    }
    let env = onset_envelope(&clip.samples);
    let energy: f64 = env.iter().map(|v| v * v).sum();
    if energy <= 1e-12 * env.len() as f64 {
        return Err(Error::NoTempo);
    }
    let fr = clip.sample_rate as f64 / ONSET_HOP as f64;
    let lo = (60.0 * fr / BPM_MAX).floor() as usize;
    let hi = (60.0 * fr / BPM_MIN).ceil() as usize;
    let Some(best_lag) = (lo..=hi).max_by(|&a, &b| autocorr(&env, a as f64).total_cmp(&autocorr(&env, b as f64))) else {
        return Err(Error::NoTempo);
    };
    let (lag, strength) = refine(&env, best_lag as f64);
    if strength <= 0.0 {
        return Err(Error::NoTempo);
    }
    let bpm = lag_to_bpm(lag, fr).clamp(BPM_MIN, BPM_MAX);
    let mut choice = TempoEstimate { bpm, strength };
    for alt in [bpm / 2.0, bpm * 2.0] {
        if !(BPM_MIN..=BPM_MAX).contains(&alt) {
            continue;
        }
        let (alt_lag, alt_strength) = refine(&env, 60.0 * fr / alt);
        let alt_bpm = lag_to_bpm(alt_lag, fr).clamp(BPM_MIN, BPM_MAX);
        if alt_strength >= (1.0 - OCTAVE_TOLERANCE) * strength && (alt_bpm - 120.0).abs() < (choice.bpm - 120.0).abs() {
            choice = TempoEstimate {
                bpm: alt_bpm,
                strength: alt_strength,
            };
        }
    }
    Ok(choice)
}

/// Phase-vocoder stretch; output duration is input duration / `ratio`.
pub fn time_stretch(clip: &AudioClip, ratio: f64) -> Result<AudioClip> {
    clip.require_mono()?;
    if !(MIN_STRETCH..=MAX_STRETCH).contains(&ratio) {
        return Err(Error::OutOfRange(format!("stretch ratio {ratio} outside [0.5, 2]")));
    }
    Ok(AudioClip::mono(vocoder::stretch(&clip.samples, ratio), clip.sample_rate))
}

/// Truncate, or append the clip's beginning repeatedly, to exactly
/// `round(target_s * rate)` samples.
pub fn fit_duration(clip: &AudioClip, target_s: f64) -> AudioClip {
    fit_len(clip, (target_s * clip.sample_rate as f64).round() as usize)
}

pub fn fit_len(clip: &AudioClip, target: usize) -> AudioClip {
    let mut out = Vec::with_capacity(target);
    while out.len() < target && !clip.samples.is_empty() {
        let take = (target - out.len()).min(clip.samples.len());
        out.extend_from_slice(&clip.samples[..take]);
    }
    out.resize(target, 0.0);
    AudioClip::mono(out, clip.sample_rate)
}

/// Stretch ratio moving `bpm_b` onto the multiple of `bpm_a` (x1, x2, x1/2)
/// nearest to no change.
pub fn sync_ratio(bpm_a: f64, bpm_b: f64) -> f64 {
    [bpm_a, 2.0 * bpm_a, bpm_a / 2.0]
        .into_iter()
        .map(|target| target / bpm_b)
        .filter(|r| (MIN_STRETCH..=MAX_STRETCH).contains(r))
        .min_by(|x, y| (x - 1.0).abs().total_cmp(&(y - 1.0).abs()))
        .unwrap_or(1.0)
}

#[derive(Clone, Debug)]
pub struct TempoMix {
    pub segments: Vec<AudioClip>,
    pub bpm_a: f64,
    pub bpm_b: f64,
    pub ratio: f64,
}

/// Align `b3`'s tempo to `a3`'s, fit it to `a3`'s length, overlay, and cut
/// into one-second segments.
pub fn mix_tempo_sync(a3: &AudioClip, b3: &AudioClip) -> Result<TempoMix> {
    mix_with_tempi(a3, b3, estimate_bpm(a3)?.bpm, estimate_bpm(b3)?.bpm)
}

/// As [`mix_tempo_sync`] with known tempi.
pub fn mix_with_tempi(a3: &AudioClip, b3: &AudioClip, bpm_a: f64, bpm_b: f64) -> Result<TempoMix> {
    let ratio = sync_ratio(bpm_a, bpm_b);
    let stretched = if ratio == 1.0 { b3.clone() } else { time_stretch(b3, ratio)? };
    let fitted = fit_len(&stretched, a3.len());
    let mixed = overlay(a3, &fitted)?;
    Ok(TempoMix {
        segments: segment_clip(&mixed, 1.0)?,
        bpm_a,
        bpm_b,
        ratio,
    })
}
