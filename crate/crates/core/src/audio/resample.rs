//! Band-limited resampling with a Kaiser-windowed sinc kernel.
//!
//! The kernel spans 32 zero crossings of the output-rate sinc on either side
//! of the read position (64 taps per output phase), widened in input samples
//! when downsampling so the cutoff tracks the lower Nyquist rate.

use std::sync::OnceLock;

const HALF_TAPS: f64 = 32.0;
const KAISER_BETA: f64 = 8.6;
const ROLLOFF: f64 = 0.945;
const TABLE_POINTS: usize = 1 << 15;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// `sinc(ROLLOFF * HALF_TAPS * u) * kaiser(u)` sampled on `u in [0, 1]`.
fn kernel_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let norm = bessel_i0(KAISER_BETA);
        (0..=TABLE_POINTS + 1)
            .map(|i| {
                let u = (i as f64 / TABLE_POINTS as f64).min(1.0);
                let x = std::f64::consts::PI * ROLLOFF * HALF_TAPS * u;
                let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
                let window = bessel_i0(KAISER_BETA * (1.0 - u * u).max(0.0).sqrt()) / norm;
                sinc * window
            })
            .collect()
    })
}

#[inline]
fn kernel(table: &[f64], u: f64) -> f64 {
    if u >= 1.0 {
        return 0.0;
    }
    let pos = u * TABLE_POINTS as f64;
    let i = pos as usize;
    let frac = pos - i as f64;
    table[i] + (table[i + 1] - table[i]) * frac
}

/// Smallest `q <= MAX_PERIOD` with `step * q` integral, if any.
fn rational_period(step: f64) -> Option<usize> {
    const MAX_PERIOD: usize = 2048;
    (1..=MAX_PERIOD).find(|&q| {
        let x = step * q as f64;
        (x - x.round()).abs() < 1e-9 * x.max(1.0)
    })
}

/// Read `out_len` samples from `input` at positions `offset + n * step`
/// (in input samples), band-limiting when `step > 1`. Samples outside the
/// input are zero.
pub fn resample_positions(input: &[f32], step: f64, offset: f64, out_len: usize) -> Vec<f32> {
    let scale = (1.0 / step).min(1.0);
    let half_width = HALF_TAPS / scale;
    let gain = ROLLOFF * scale;
    match rational_period(step).filter(|&q| q < out_len) {
        Some(q) => resample_periodic(input, step, offset, out_len, q, half_width, gain),
        None => resample_direct(input, step, offset, out_len, half_width, gain),
    }
}

fn resample_direct(input: &[f32], step: f64, offset: f64, out_len: usize, half_width: f64, gain: f64) -> Vec<f32> {
    let table = kernel_table();
    let len = input.len() as isize;
    (0..out_len)
        .map(|n| {
            let t = offset + n as f64 * step;
            let lo = (t - half_width).ceil().max(0.0) as isize;
            let hi = ((t + half_width).floor() as isize).min(len - 1);
            let mut acc = 0.0f64;
            let mut j = lo;
            while j <= hi {
                let u = (t - j as f64).abs() / half_width;
                acc += input[j as usize] as f64 * kernel(table, u);
                j += 1;
            }
            (acc * gain) as f32
        })
        .collect()
}

/// Rational steps repeat their fractional read phase every `q` outputs, so
/// each phase's taps are computed once.
fn resample_periodic(
    input: &[f32],
    step: f64,
    offset: f64,
    out_len: usize,
    q: usize,
    half_width: f64,
    gain: f64,
) -> Vec<f32> {
    let table = kernel_table();
    let p = (step * q as f64).round() as isize;
    let phases: Vec<(isize, isize, Vec<f64>)> = (0..q)
        .map(|r| {
            let t = offset + r as f64 * step;
            let base = t.floor();
            let frac = t - base;
            let d0 = (frac - half_width).ceil() as isize;
            let d1 = (frac + half_width).floor() as isize;
            let w = (d0..=d1).map(|d| kernel(table, (frac - d as f64).abs() / half_width)).collect();
            (base as isize, d0, w)
        })
        .collect();
    let len = input.len() as isize;
    (0..out_len)
        .map(|n| {
            let (base, d0, w) = &phases[n % q];
            let start = base + (n / q) as isize * p + d0;
            let mut acc = 0.0f64;
            if start >= 0 && start + (w.len() as isize) <= len {
                let src = &input[start as usize..start as usize + w.len()];
                for (x, k) in src.iter().zip(w) {
                    acc += *x as f64 * k;
                }
            } else {
                for (i, k) in w.iter().enumerate() {
                    let j = start + i as isize;
                    if j >= 0 && j < len {
                        acc += input[j as usize] as f64 * k;
                    }
                }
            }
            (acc * gain) as f32
        })
        .collect()
}

/// Convert between sample rates; identical rates return the input untouched.
pub fn resample(input: &[f32], from_rate: u32, to_rate: u32) -> Vec<f32> {
    if from_rate == to_rate {
        return input.to_vec();
    }
    let out_len = (input.len() as u128 * to_rate as u128 + from_rate as u128 / 2) / from_rate as u128;
    resample_positions(input, from_rate as f64 / to_rate as f64, 0.0, out_len as usize)
}

/// Stretch or squeeze `input` to exactly `out_len` samples (uniform rate change).
pub fn resample_to_len(input: &[f32], out_len: usize) -> Vec<f32> {
    if out_len == input.len() {
        return input.to_vec();
    }
    let step = input.len() as f64 / out_len as f64;
    resample_positions(input, step, 0.0, out_len)
}
