//! Audio clips, WAV I/O, standardization, segmentation and overlay.

mod resample;
mod wav;

pub use resample::{resample, resample_positions, resample_to_len};
pub use wav::{load_wav, write_wav};

use crate::error::{Error, Result};

/// Working sample rate of every model-facing operation.
pub const TARGET_RATE: u32 = 22050;
/// RMS level clips are normalized to (about -20 dBFS).
pub const TARGET_RMS: f64 = 0.1;

/// Sampled audio. Multi-channel data is interleaved; every processing step
/// past [`standardize`] requires mono.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub channels: u16,
}

impl AudioClip {
    pub fn mono(samples: Vec<f32>, sample_rate: u32) -> Self {
        AudioClip {
            samples,
            sample_rate,
            channels: 1,
        }
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self::mono(vec![0.0; len], sample_rate)
    }

    /// Frames per channel.
    pub fn len(&self) -> usize {
        self.samples.len() / self.channels.max(1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    pub fn peak(&self) -> f32 {
        peak(&self.samples)
    }

    pub fn require_mono(&self) -> Result<()> {
        if self.channels != 1 {
            return Err(Error::Contract(format!(
                "expected a mono clip, got {} channels",
                self.channels
            )));
        }
        Ok(())
    }

    pub fn require_rate(&self, rate: u32) -> Result<()> {
        if self.sample_rate != rate {
            return Err(Error::Contract(format!(
                "expected {rate} Hz audio, got {} Hz",
                self.sample_rate
            )));
        }
        Ok(())
    }

    /// Channel average.
    pub fn downmix(&self) -> AudioClip {
        if self.channels <= 1 {
            return AudioClip::mono(self.samples.clone(), self.sample_rate);
        }
        let c = self.channels as usize;
        let samples = self
            .samples
            .chunks_exact(c)
            .map(|frame| (frame.iter().map(|&v| v as f64).sum::<f64>() / c as f64) as f32)
            .collect();
        AudioClip::mono(samples, self.sample_rate)
    }

    /// Samples `[start, end)` of a mono clip.
    pub fn slice(&self, start: usize, end: usize) -> AudioClip {
        AudioClip::mono(self.samples[start..end].to_vec(), self.sample_rate)
    }

    pub fn scaled(&self, gain: f64) -> AudioClip {
        AudioClip {
            samples: self.samples.iter().map(|&v| (v as f64 * gain) as f32).collect(),
            sample_rate: self.sample_rate,
            channels: self.channels,
        }
    }
}

pub fn rms(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / samples.len() as f64).sqrt()
}

pub fn peak(samples: &[f32]) -> f32 {
    samples.iter().fold(0.0f32, |m, v| m.max(v.abs()))
}

/// Uniformly rescale so the peak is exactly 1 when it exceeds 1.
pub fn limit_peak(samples: &mut [f32]) {
    let p = peak(samples) as f64;
    if p > 1.0 {
        let g = 1.0 / p;
        for v in samples.iter_mut() {
            *v = (*v as f64 * g) as f32;
        }
    }
}

/// Downmix to mono, resample to `target_rate`, scale to `target_rms`, then
/// peak-limit. When limiting engages the output RMS is below the target.
pub fn standardize(clip: &AudioClip, target_rate: u32, target_rms: f64) -> Result<AudioClip> {
    if clip.is_empty() {
        return Err(Error::Contract("cannot standardize an empty clip".into()));
    }
    if target_rate == 0 || !(target_rms > 0.0) {
        return Err(Error::Contract(format!(
            "invalid standardization target ({target_rate} Hz, rms {target_rms})"
        )));
    }
    let mono = clip.downmix();
    let samples = resample(&mono.samples, mono.sample_rate, target_rate);
    let level = rms(&samples);
    if level == 0.0 || !level.is_finite() {
        return Err(Error::SilentClip);
    }
    let gain = target_rms / level;
    let mut samples: Vec<f32> = samples.iter().map(|&v| (v as f64 * gain) as f32).collect();
    limit_peak(&mut samples);
    Ok(AudioClip::mono(samples, target_rate))
}

/// Consecutive non-overlapping segments of `seg_seconds`; the remainder is dropped.
pub fn segment_clip(clip: &AudioClip, seg_seconds: f64) -> Result<Vec<AudioClip>> {
    clip.require_mono()?;
    if !(seg_seconds > 0.0) {
        return Err(Error::Contract(format!("segment length must be positive, got {seg_seconds}")));
    }
    let seg_len = (seg_seconds * clip.sample_rate as f64).round() as usize;
    if seg_len == 0 {
        return Err(Error::Contract("segment shorter than one sample".into()));
    }
    Ok(clip
        .samples
        .chunks_exact(seg_len)
        .map(|c| AudioClip::mono(c.to_vec(), clip.sample_rate))
        .collect())
}

/// Sample-wise sum of two equal-length mono clips, peak-limited to 1.
pub fn overlay(a: &AudioClip, b: &AudioClip) -> Result<AudioClip> {
    a.require_mono()?;
    b.require_mono()?;
    if a.sample_rate != b.sample_rate {
        return Err(Error::Contract(format!(
            "overlay rate mismatch: {} vs {} Hz",
            a.sample_rate, b.sample_rate
        )));
    }
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "overlay length mismatch: {} vs {} samples",
            a.len(),
            b.len()
        )));
    }
    let mut samples: Vec<f32> = a.samples.iter().zip(&b.samples).map(|(x, y)| x + y).collect();
    limit_peak(&mut samples);
    Ok(AudioClip::mono(samples, a.sample_rate))
}
