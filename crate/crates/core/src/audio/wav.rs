use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};

use super::AudioClip;
use crate::error::{Error, Result};

/// Decode PCM16, PCM24 or float32 WAV (mono or stereo) to samples in [-1, 1].
/// Stereo stays interleaved until standardization.
pub fn load_wav(path: &Path) -> Result<AudioClip> {
    let reader = hound::WavReader::open(path).map_err(|e| map_err(path, e))?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(Error::UnsupportedFormat {
            path: path.into(),
            msg: format!("{} channels", spec.channels),
        });
    }
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Int, 24) => reader
            .into_samples::<i32>()
            .map(|s| s.map(|v| v as f32 / 8_388_608.0))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader.into_samples::<f32>().collect::<std::result::Result<_, _>>(),
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat {
                path: path.into(),
                msg: format!("{bits}-bit {fmt:?}"),
            })
        }
    }
    .map_err(|e| map_err(path, e))?;
    Ok(AudioClip {
        samples,
        sample_rate: spec.sample_rate,
        channels: spec.channels,
    })
}

fn map_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => Error::UnsupportedFormat {
            path: path.into(),
            msg: "unsupported WAV encoding".into(),
        },
        other => Error::Format {
            path: path.into(),
            msg: other.to_string(),
        },
    }
}

/// Write an IEEE float32 WAV at the clip's rate and channel count.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let spec = WavSpec {
        channels: clip.channels,
        sample_rate: clip.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| map_err(path, e))?;
    for &s in &clip.samples {
        writer.write_sample(s).map_err(|e| map_err(path, e))?;
    }
    writer.finalize().map_err(|e| map_err(path, e))
}
