//! Phase vocoder with identity phase locking.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub const WINDOW: usize = 1024;
pub const SYNTH_HOP: usize = 256;

fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

fn princarg(x: f64) -> f64 {
    x - 2.0 * PI * (x / (2.0 * PI)).round()
}

/// Bins that are strict maxima over two neighbours on each side.
fn peaks(mag: &[f64]) -> Vec<usize> {
    let n = mag.len();
    (0..n)
        .filter(|&k| {
            let lo = k.saturating_sub(2);
            let hi = (k + 2).min(n - 1);
            mag[k] > 0.0 && (lo..=hi).all(|j| j == k || mag[k] > mag[j] || (mag[k] == mag[j] && j > k))
        })
        .collect()
}

/// Time-scale `input` so that the output has `round(len / ratio)` samples;
/// `ratio > 1` shortens. Pitch is preserved.
pub fn stretch(input: &[f32], ratio: f64) -> Vec<f32> {
    let out_len = (input.len() as f64 / ratio).round() as usize;
    if input.is_empty() || out_len == 0 {
        return vec![0.0; out_len];
    }
    let w = WINDOW;
    let hs = SYNTH_HOP as f64;
    let ha = hs * ratio;
    let bins = w / 2 + 1;
    let mut padded = vec![0.0f64; w];
    padded.extend(input.iter().map(|&v| v as f64));
    padded.extend(std::iter::repeat(0.0).take(2 * w));
    let offset = (w as f64 / 2.0 + w as f64 / (2.0 * ratio)).round() as usize;
    let frames = ((offset + out_len) as f64 / hs).ceil() as usize + 1;

    let window = hann(w);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(w);
    let inv = planner.plan_fft_inverse(w);
    let mut buf = vec![Complex64::new(0.0, 0.0); w];
    let mut out = vec![0.0f64; frames * SYNTH_HOP + w];
    let mut norm = vec![0.0f64; frames * SYNTH_HOP + w];
    let mut prev_phase = vec![0.0f64; bins];
    let mut out_phase = vec![0.0f64; bins];
    let mut prev_pos = 0usize;
    let mut mag = vec![0.0f64; bins];
    let mut phase = vec![0.0f64; bins];

    for m in 0..frames {
        let pos = (m as f64 * ha).round() as usize;
        for i in 0..w {
            let v = padded.get(pos + i).copied().unwrap_or(0.0);
            buf[i] = Complex64::new(v * window[i], 0.0);
        }
        fwd.process(&mut buf);
        for k in 0..bins {
            mag[k] = buf[k].norm();
            phase[k] = buf[k].arg();
        }
        if m == 0 {
            out_phase.copy_from_slice(&phase);
        } else {
            let da = (pos - prev_pos) as f64;
            let pk = peaks(&mag);
            let mut advanced = out_phase.clone();
            for &k in &pk {
                let omega = 2.0 * PI * k as f64 / w as f64;
                if da > 0.0 {
                    let dev = princarg(phase[k] - prev_phase[k] - omega * da);
                    advanced[k] = out_phase[k] + (omega + dev / da) * hs;
                } else {
                    advanced[k] = out_phase[k] + omega * hs;
                }
            }
            if pk.is_empty() {
                out_phase.copy_from_slice(&phase);
            } else {
                // Each bin follows the nearest peak's rotation.
                let mut p = 0;
                for k in 0..bins {
                    while p + 1 < pk.len() && (pk[p + 1] as isize - k as isize).abs() < (pk[p] as isize - k as isize).abs() {
                        p += 1;
                    }
                    let peak = pk[p];
                    out_phase[k] = advanced[peak] + phase[k] - phase[peak];
                }
            }
        }
        prev_phase.copy_from_slice(&phase);
        prev_pos = pos;

        for k in 0..bins {
            buf[k] = Complex64::from_polar(mag[k], out_phase[k]);
        }
        for k in bins..w {
            buf[k] = buf[w - k].conj();
        }
        inv.process(&mut buf);
        let start = m * SYNTH_HOP;
        for i in 0..w {
            out[start + i] += buf[i].re / w as f64 * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    (0..out_len)
        .map(|i| {
            let j = offset + i;
            let n = norm[j];
            if n > 1e-8 {
                (out[j] / n) as f32
            } else {
                0.0
            }
        })
        .collect()
}
