use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, TARGET_RATE};
use crate::error::Result;

pub const HOP_S: f64 = 0.010;
pub const WINDOW_S: f64 = 0.064;
pub const YIN_THRESHOLD: f64 = 0.15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PitchTrack {
    pub hop_s: f64,
    /// Hz per frame; 0 marks an unvoiced frame.
    pub f0: Vec<f64>,
    pub confidence: Vec<f64>,
}

impl PitchTrack {
    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn voiced(&self) -> impl Iterator<Item = f64> + '_ {
        self.f0.iter().copied().filter(|&f| f > 0.0)
    }
}

/// Frames covering `len` samples at a 10 ms hop.
pub fn track_frames(len: usize, rate: u32) -> usize {
    (len as f64 / (HOP_S * rate as f64)).ceil() as usize
}

/// YIN estimate per 10 ms frame over 64 ms windows centred on each frame.
pub fn track_pitch(clip: &AudioClip) -> Result<PitchTrack> {
    clip.require_mono()?;
    clip.require_rate(TARGET_RATE)?;
    let sr = clip.sample_rate as f64;
    let win = (WINDOW_S * sr).round() as usize;
    let len = clip.len();
    if len < win {
        return Ok(PitchTrack {
            hop_s: HOP_S,
            f0: Vec::new(),
            confidence: Vec::new(),
        });
    }
    let integ = win / 2;
    let tau_max = win - integ - 1;
    let hop = HOP_S * sr;
    let n = track_frames(len, clip.sample_rate);
    let fft_len = (integ + tau_max + integ).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);
    let mut f0 = Vec::with_capacity(n);
    let mut confidence = Vec::with_capacity(n);
    let mut frame = vec![0.0f64; integ + tau_max];
    let mut a = vec![Complex64::new(0.0, 0.0); fft_len];
    let mut b = vec![Complex64::new(0.0, 0.0); fft_len];
    let mut d = vec![0.0f64; tau_max + 1];
    for i in 0..n {
        let centre = ((i as f64 + 0.5) * hop).round() as isize;
        // Windows near the edges slide inward rather than reading padding.
        let start = (centre - (win / 2) as isize).clamp(0, (len - frame.len()) as isize) as usize;
        for (v, &x) in frame.iter_mut().zip(&clip.samples[start..]) {
            *v = x as f64;
        }
        let energy0: f64 = frame[..integ].iter().map(|v| v * v).sum();
        if energy0 <= 1e-10 * integ as f64 {
            f0.push(0.0);
            confidence.push(0.0);
            continue;
        }
        // r(tau) = sum_j x[j] x[j + tau] over the integration window.
        for k in 0..fft_len {
            a[k] = Complex64::new(if k < integ { frame[k] } else { 0.0 }, 0.0);
            b[k] = Complex64::new(frame.get(k).copied().unwrap_or(0.0), 0.0);
        }
        fwd.process(&mut a);
        fwd.process(&mut b);
        for k in 0..fft_len {
            b[k] *= a[k].conj();
        }
        inv.process(&mut b);
        let scale = 1.0 / fft_len as f64;
        let mut energy = energy0;
        for tau in 0..=tau_max {
            if tau > 0 {
                energy += frame[tau + integ - 1].powi(2) - frame[tau - 1].powi(2);
            }
            d[tau] = (energy0 + energy - 2.0 * b[tau].re * scale).max(0.0);
        }
        let (freq, conf) = yin_pick(&d, sr);
        f0.push(freq);
        confidence.push(conf);
    }
    Ok(PitchTrack {
        hop_s: HOP_S,
        f0,
        confidence,
    })
}

/// Threshold search on the cumulative-mean-normalized difference, refined by
/// a parabola through the raw difference around the chosen lag.
fn yin_pick(d: &[f64], sr: f64) -> (f64, f64) {
    let tau_max = d.len() - 1;
    let mut cmnd = vec![1.0; d.len()];
    let mut running = 0.0;
    for tau in 1..=tau_max {
        running += d[tau];
        cmnd[tau] = if running > 0.0 { d[tau] * tau as f64 / running } else { 1.0 };
    }
    let mut tau = 2;
    let mut found = None;
    while tau < tau_max {
        if cmnd[tau] < YIN_THRESHOLD {
            while tau + 1 < tau_max && cmnd[tau + 1] < cmnd[tau] {
                tau += 1;
            }
            found = Some(tau);
            break;
        }
        tau += 1;
    }
    let Some(tau) = found else {
        let min = cmnd[2..].iter().fold(f64::INFINITY, |m, &v| m.min(v));
        return (0.0, (1.0 - min).clamp(0.0, 1.0));
    };
    let (y0, y1, y2) = (d[tau - 1], d[tau], d[tau + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    let shift = if denom.abs() > 1e-12 { (0.5 * (y0 - y2) / denom).clamp(-1.0, 1.0) } else { 0.0 };
    (sr / (tau as f64 + shift), (1.0 - cmnd[tau]).clamp(0.0, 1.0))
}

/// Signed distance in cents from `reference` to `f`.
pub fn cents(f: f64, reference: f64) -> f64 {
    1200.0 * (f / reference).log2()
}
