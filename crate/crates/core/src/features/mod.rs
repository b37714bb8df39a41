//! Constant-Q front end: 96 log-spaced bins over one second of audio,
//! dB-scaled into [0, 1].

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::audio::{AudioClip, TARGET_RATE};
use crate::dataset::{FeatureStore, LabelVector};
use crate::error::{Error, Result};

pub const N_BINS: usize = 96;
pub const BINS_PER_OCTAVE: usize = 12;
pub const F_MIN: f64 = 32.703;
pub const HOP: usize = 256;
pub const CLIP_SAMPLES: usize = TARGET_RATE as usize;
pub const N_FRAMES: usize = CLIP_SAMPLES / HOP + 1;
pub const DB_FLOOR: f64 = -80.0;

pub fn bin_frequency(k: usize) -> f64 {
    F_MIN * 2f64.powf(k as f64 / BINS_PER_OCTAVE as f64)
}

pub fn quality_factor() -> f64 {
    1.0 / (2f64.powf(1.0 / BINS_PER_OCTAVE as f64) - 1.0)
}

/// Number of frames for a centred analysis at `hop`.
pub fn frame_count(len: usize, hop: usize) -> usize {
    len / hop + 1
}

/// Reflect (mirror without repeating the edge) index into `0..len`.
pub(crate) fn reflect_index(i: isize, len: usize) -> usize {
    let n = len as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

/// One complex kernel per bin, centred (odd length), Hann-windowed and
/// normalized by its window sum.
pub struct Kernel {
    pub freq: f64,
    pub half: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

pub struct KernelBank {
    pub sample_rate: u32,
    pub kernels: Vec<Kernel>,
}

impl KernelBank {
    pub fn new(sample_rate: u32) -> Self {
        let sr = sample_rate as f64;
        let q = quality_factor();
        let kernels = (0..N_BINS)
            .map(|k| {
                let freq = bin_frequency(k);
                let half = ((q * sr / freq) / 2.0).floor() as usize;
                let len = 2 * half + 1;
                let mut re = Vec::with_capacity(len);
                let mut im = Vec::with_capacity(len);
                let mut wsum = 0.0;
                for n in 0..len {
                    let j = n as f64 - half as f64;
                    let w = 0.5 * (1.0 + (std::f64::consts::PI * j / (half as f64 + 1.0)).cos());
                    let phase = -2.0 * std::f64::consts::PI * freq * j / sr;
                    re.push(w * phase.cos());
                    im.push(w * phase.sin());
                    wsum += w;
                }
                for v in re.iter_mut().chain(im.iter_mut()) {
                    *v /= wsum;
                }
                Kernel { freq, half, re, im }
            })
            .collect();
        KernelBank { sample_rate, kernels }
    }

    /// The shared bank at the working sample rate.
    pub fn shared() -> &'static KernelBank {
        static BANK: OnceLock<KernelBank> = OnceLock::new();
        BANK.get_or_init(|| KernelBank::new(TARGET_RATE))
    }

    pub fn max_half(&self) -> usize {
        self.kernels.iter().map(|k| k.half).max().unwrap_or(0)
    }

    /// Magnitudes, bin-major (`N_BINS` rows of `frame_count(len, HOP)` columns).
    pub fn magnitudes(&self, samples: &[f32]) -> Vec<f64> {
        let pad = self.max_half();
        let len = samples.len();
        let padded: Vec<f64> = (0..len + 2 * pad)
            .map(|i| samples[reflect_index(i as isize - pad as isize, len)] as f64)
            .collect();
        let frames = frame_count(len, HOP);
        let mut out = vec![0.0; self.kernels.len() * frames];
        for (k, kernel) in self.kernels.iter().enumerate() {
            for t in 0..frames {
                let start = t * HOP + pad - kernel.half;
                let seg = &padded[start..start + kernel.re.len()];
                let (re, im) = dot2(seg, &kernel.re, &kernel.im);
                out[k * frames + t] = re.hypot(im);
            }
        }
        out
    }
}

/// Two dot products sharing one operand, in eight independent lanes.
fn dot2(x: &[f64], a: &[f64], b: &[f64]) -> (f64, f64) {
    const L: usize = 8;
    let mut sa = [0.0; L];
    let mut sb = [0.0; L];
    let chunks = x.len() / L;
    for c in 0..chunks {
        let o = c * L;
        for l in 0..L {
            sa[l] += x[o + l] * a[o + l];
            sb[l] += x[o + l] * b[o + l];
        }
    }
    let mut ra: f64 = sa.iter().sum();
    let mut rb: f64 = sb.iter().sum();
    for i in chunks * L..x.len() {
        ra += x[i] * a[i];
        rb += x[i] * b[i];
    }
    (ra, rb)
}

/// 96x87 constant-Q magnitudes of a one-second mono clip at 22050 Hz.
pub fn cqt(clip: &AudioClip) -> Result<Vec<f64>> {
    clip.require_mono()?;
    clip.require_rate(TARGET_RATE)?;
    if clip.len() != CLIP_SAMPLES {
        return Err(Error::Contract(format!(
            "cqt expects {CLIP_SAMPLES} samples, got {}",
            clip.len()
        )));
    }
    Ok(KernelBank::shared().magnitudes(&clip.samples))
}

/// `20 log10(mag / max)` floored at -80 dB and mapped affinely onto [0, 1].
pub fn scale_db(mag: &[f64]) -> Vec<f32> {
    let max = mag.iter().fold(0.0f64, |m, &v| m.max(v));
    if max <= 0.0 {
        return vec![0.0; mag.len()];
    }
    mag.iter()
        .map(|&v| {
            let db = if v > 0.0 { (20.0 * (v / max).log10()).max(DB_FLOOR) } else { DB_FLOOR };
            ((db - DB_FLOOR) / -DB_FLOOR) as f32
        })
        .collect()
}

/// Model input for one clip: scaled CQT, bin-major.
pub fn spectrogram(clip: &AudioClip) -> Result<Vec<f32>> {
    Ok(scale_db(&cqt(clip)?))
}

/// Spectrograms of one-second clips, computed in parallel, stored in input order.
pub fn extract_store<'a>(items: &[(&'a AudioClip, LabelVector)]) -> Result<FeatureStore> {
    let rows = items
        .par_iter()
        .map(|(clip, _)| spectrogram(clip))
        .collect::<Result<Vec<_>>>()?;
    let mut store = FeatureStore::new(N_BINS, N_FRAMES);
    for (row, (_, label)) in rows.iter().zip(items) {
        store.push(row, *label)?;
    }
    Ok(store)
}

/// Per-frame index of the loudest bin.
pub fn argmax_per_frame(mag: &[f64], frames: usize) -> Vec<usize> {
    (0..frames)
        .map(|t| {
            (0..mag.len() / frames)
                .max_by(|&a, &b| mag[a * frames + t].total_cmp(&mag[b * frames + t]))
                .unwrap_or(0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64) -> AudioClip {
        AudioClip::mono(
            (0..CLIP_SAMPLES)
                .map(|i| (0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / 22050.0).sin()) as f32)
                .collect(),
            22050,
        )
    }

    #[test]
    fn shape_and_frame_count() {
        assert_eq!(N_FRAMES, 87);
        assert_eq!(frame_count(22050, 256), 87);
        assert_eq!(cqt(&sine(440.0)).unwrap().len(), 96 * 87);
    }

    #[test]
    fn bin_centre_tone_peaks_in_its_bin() {
        let mag = cqt(&sine(523.25)).unwrap();
        let arg = argmax_per_frame(&mag, N_FRAMES);
        assert!(arg[2..85].iter().all(|&k| k == 48), "{arg:?}");
        // Half-amplitude response of a window-sum normalized kernel.
        assert!((mag[48 * N_FRAMES + 43] - 0.25).abs() < 0.01);
    }

    #[test]
    fn silence_and_contracts() {
        let mag = cqt(&AudioClip::silence(CLIP_SAMPLES, 22050)).unwrap();
        assert!(mag.iter().all(|&v| v == 0.0));
        assert!(cqt(&AudioClip::silence(22049, 22050)).is_err());
        assert!(cqt(&AudioClip::silence(CLIP_SAMPLES, 44100)).is_err());
    }

    #[test]
    fn db_scaling_points() {
        let s = scale_db(&[1.0, 1e-4, 1e-2, 1e-6, 0.0]);
        assert_eq!(s[0], 1.0);
        assert!(s[1].abs() < 1e-6);
        assert!((s[2] - 0.5).abs() < 1e-6);
        assert_eq!(s[3], 0.0);
        assert_eq!(s[4], 0.0);
        assert!(scale_db(&[0.0; 4]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reflect_padding() {
        let idx: Vec<usize> = (-3..7).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
    }
}
