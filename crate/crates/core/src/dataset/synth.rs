//! Desk-scale synthetic corpus: additive-synthesis tones with per-class
//! harmonic profiles and registers, an amplitude pulse train at a per-clip
//! tempo, and round-robin genre tags.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::labels::{Genre, Instrument};
use super::manifest::{ClipRecord, TrackLine};
use crate::audio::{overlay, standardize, write_wav, AudioClip, TARGET_RATE, TARGET_RMS};
use crate::error::{Error, Result};

pub const SYNTH_RATE: u32 = 44100;
pub const SYNTH_SECONDS: f64 = 3.0;

/// Ground truth written next to each generated clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub path: PathBuf,
    pub instrument: Instrument,
    pub f0_hz: f64,
    pub bpm: f64,
}

struct Timbre {
    /// Inclusive MIDI note range of the fundamental.
    register: (u8, u8),
    harmonics: Vec<f64>,
    vibrato_hz: f64,
    vibrato_cents: f64,
    /// Envelope level between pulses, relative to the pulse peak.
    floor: f64,
    decay_s: f64,
    noise: f64,
    drive: f64,
    /// Formant centres (Hz, width Hz, gain) applied on top of `harmonics`.
    formants: &'static [(f64, f64, f64)],
}

fn power_law(n: usize, exponent: f64) -> Vec<f64> {
    (1..=n).map(|h| 1.0 / (h as f64).powf(exponent)).collect()
}

fn timbre(inst: Instrument) -> Timbre {
    let base = Timbre {
        register: (48, 67),
        harmonics: power_law(10, 1.0),
        vibrato_hz: 0.0,
        vibrato_cents: 0.0,
        floor: 0.6,
        decay_s: 0.25,
        noise: 0.0,
        drive: 0.0,
        formants: &[],
    };
    match inst {
        Instrument::Cel => Timbre {
            register: (36, 55),
            harmonics: power_law(14, 1.0),
            vibrato_hz: 5.0,
            vibrato_cents: 8.0,
            ..base
        },
        Instrument::Cla => Timbre {
            register: (50, 69),
            harmonics: (1..=11).map(|h| if h % 2 == 1 { 1.0 / h as f64 } else { 0.02 }).collect(),
            floor: 0.7,
            ..base
        },
        Instrument::Flu => Timbre {
            register: (72, 91),
            harmonics: vec![1.0, 0.25, 0.1, 0.04],
            vibrato_hz: 5.0,
            vibrato_cents: 10.0,
            noise: 0.03,
            ..base
        },
        Instrument::Gac => Timbre {
            register: (40, 59),
            harmonics: power_law(10, 1.3),
            floor: 0.05,
            decay_s: 0.3,
            ..base
        },
        Instrument::Gel => Timbre {
            register: (45, 64),
            harmonics: power_law(14, 0.5),
            floor: 0.3,
            decay_s: 0.5,
            drive: 2.0,
            ..base
        },
        Instrument::Org => Timbre {
            register: (48, 67),
            harmonics: vec![1.0, 0.8, 0.3, 0.6, 0.0, 0.0, 0.0, 0.4],
            floor: 0.75,
            decay_s: 0.15,
            ..base
        },
        Instrument::Pia => Timbre {
            register: (55, 74),
            harmonics: power_law(10, 2.0),
            floor: 0.05,
            decay_s: 0.4,
            ..base
        },
        Instrument::Sax => Timbre {
            register: (49, 68),
            harmonics: vec![0.5, 0.9, 1.0, 0.8, 0.6, 0.45, 0.3, 0.2, 0.12, 0.08],
            vibrato_hz: 5.5,
            vibrato_cents: 12.0,
            noise: 0.01,
            ..base
        },
        Instrument::Tru => Timbre {
            register: (58, 77),
            harmonics: vec![0.6, 0.9, 1.0, 0.9, 0.75, 0.6, 0.45, 0.35, 0.25, 0.18, 0.12],
            floor: 0.5,
            decay_s: 0.15,
            ..base
        },
        Instrument::Vio => Timbre {
            register: (67, 86),
            harmonics: (1..=12)
                .map(|h| if h % 3 == 0 { 0.3 } else { 1.0 } / (h as f64).powf(0.9))
                .collect(),
            vibrato_hz: 6.0,
            vibrato_cents: 20.0,
            ..base
        },
        Instrument::Voi => Timbre {
            register: (52, 71),
            harmonics: power_law(16, 1.0).iter().map(|a| 0.3 * a).collect(),
            vibrato_hz: 5.0,
            vibrato_cents: 25.0,
            formants: &[(700.0, 150.0, 1.0), (1200.0, 200.0, 0.6)],
            ..base
        },
    }
}

pub fn midi_to_hz(note: f64) -> f64 {
    440.0 * 2f64.powf((note - 69.0) / 12.0)
}

/// Per-clip generator seed, independent of how many other clips exist.
fn clip_seed(seed: u64, inst: Instrument, index: usize) -> u64 {
    let mut z = seed
        .wrapping_add((inst.index() as u64) << 32)
        .wrapping_add(index as u64)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random fundamental (equal-tempered, within the class register) and tempo
/// (integer BPM in 60..=180) for one clip.
pub fn draw_params(inst: Instrument, rng: &mut impl Rng) -> (f64, f64) {
    let (lo, hi) = timbre(inst).register;
    let note = rng.gen_range(lo..=hi);
    let bpm = rng.gen_range(60..=180);
    (midi_to_hz(note as f64), bpm as f64)
}

/// Render one clip of `inst` at fundamental `f0` with a pulse train at `bpm`.
pub fn synth_clip(inst: Instrument, f0: f64, bpm: f64, rate: u32, seconds: f64, rng: &mut impl Rng) -> AudioClip {
    let t = timbre(inst);
    let n = (seconds * rate as f64).round() as usize;
    let nyquist_guard = 0.45 * rate as f64;
    let partials: Vec<(f64, f64, f64)> = t
        .harmonics
        .iter()
        .enumerate()
        .filter_map(|(i, &amp)| {
            let h = (i + 1) as f64;
            let freq = h * f0;
            let formant_gain: f64 = t
                .formants
                .iter()
                .map(|&(c, w, g)| g * (-0.5 * ((freq - c) / w).powi(2)).exp())
                .sum();
            let a = amp + formant_gain;
            (a > 0.0 && freq * 2f64.powf(t.vibrato_cents / 1200.0) < nyquist_guard)
                .then(|| (h, a, rng.gen::<f64>() * 2.0 * PI))
        })
        .collect();
    let period = 60.0 / bpm;
    let offset = rng.gen::<f64>() * 0.1;
    let vib_phase = rng.gen::<f64>() * 2.0 * PI;
    let dt = 1.0 / rate as f64;
    let mut phase = 0.0f64;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let time = i as f64 * dt;
        let cents = t.vibrato_cents * (2.0 * PI * t.vibrato_hz * time + vib_phase).sin();
        phase += 2.0 * PI * f0 * 2f64.powf(cents / 1200.0) * dt;
        let mut s: f64 = partials.iter().map(|&(h, a, p)| a * (h * phase + p).sin()).sum();
        if t.drive > 0.0 {
            s = (t.drive * s).tanh();
        }
        if t.noise > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            s += t.noise * z;
        }
        let env = if time < offset {
            t.floor
        } else {
            let since = (time - offset) % period;
            let attack = (since / 0.005).min(1.0);
            t.floor + (1.0 - t.floor) * attack * (-since / t.decay_s).exp()
        };
        out.push(s * env);
    }
    let fade = (0.01 * rate as f64) as usize;
    for i in 0..fade.min(n / 2) {
        let g = i as f64 / fade as f64;
        out[i] *= g;
        out[n - 1 - i] *= g;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 0.0 { 0.5 / peak } else { 0.0 };
    AudioClip::mono(out.iter().map(|v| (v * gain) as f32).collect(), rate)
}

/// Generate `count` clips per listed class into `out_dir`, returning their
/// manifest records and ground truth. Output is a pure function of
/// `(counts, seed)`.
pub fn synth_corpus(counts: &[(Instrument, usize)], seed: u64, out_dir: &Path) -> Result<(Vec<ClipRecord>, Vec<SynthTruth>)> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let jobs: Vec<(Instrument, usize)> = counts
        .iter()
        .flat_map(|&(inst, count)| (0..count).map(move |index| (inst, index)))
        .collect();
    jobs.par_iter()
        .map(|&(inst, index)| {
            let (clip, f0, bpm) = synth_one(inst, index, seed);
            let name = PathBuf::from(format!("{}_{:04}.wav", inst.code(), index));
            write_wav(&out_dir.join(&name), &clip)?;
            let record = ClipRecord {
                path: name.clone(),
                instrument: inst,
                genre: Genre::ALL[index % Genre::ALL.len()],
                duration_s: Some(clip.duration()),
                split: None,
            };
            let truth = SynthTruth {
                path: name,
                instrument: inst,
                f0_hz: f0,
                bpm,
            };
            Ok((record, truth))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().unzip())
}

/// The `index`-th two-instrument test track for `seed`: two distinct
/// classes drawn uniformly, each clip standardized, then overlaid.
pub fn synth_test_track(index: usize, seed: u64) -> Result<(AudioClip, [Instrument; 2])> {
    let mut rng = ChaCha8Rng::seed_from_u64(clip_seed(seed, Instrument::Cel, usize::MAX - index));
    let a = rng.gen_range(0..Instrument::ALL.len());
    let b = (a + rng.gen_range(1..Instrument::ALL.len())) % Instrument::ALL.len();
    let pair = [Instrument::ALL[a], Instrument::ALL[b]];
    let clips = pair
        .iter()
        .enumerate()
        .map(|(k, &inst)| standardize(&synth_one(inst, 2 * index + k, seed).0, TARGET_RATE, TARGET_RMS))
        .collect::<Result<Vec<_>>>()?;
    Ok((overlay(&clips[0], &clips[1])?, pair))
}

/// Write `count` test tracks into `out_dir` and return their manifest lines.
pub fn synth_test_tracks(count: usize, seed: u64, out_dir: &Path) -> Result<Vec<TrackLine>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let (clip, pair) = synth_test_track(i, seed)?;
            let name = PathBuf::from(format!("mix_{i:04}.wav"));
            write_wav(&out_dir.join(&name), &clip)?;
            Ok(TrackLine {
                path: name,
                labels: pair.to_vec(),
            })
        })
        .collect()
}

/// The `index`-th clip of class `inst` for `seed`, with its fundamental and tempo.
pub fn synth_one(inst: Instrument, index: usize, seed: u64) -> (AudioClip, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(clip_seed(seed, inst, index));
    let (f0, bpm) = draw_params(inst, &mut rng);
    let clip = synth_clip(inst, f0, bpm, SYNTH_RATE, SYNTH_SECONDS, &mut rng);
    (clip, f0, bpm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_files() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let (ra, _) = synth_corpus(&[(Instrument::Pia, 2)], 7, a.path()).unwrap();
        synth_corpus(&[(Instrument::Pia, 2)], 7, b.path()).unwrap();
        assert_eq!(ra.len(), 2);
        for r in &ra {
            let x = std::fs::read(a.path().join(&r.path)).unwrap();
            let y = std::fs::read(b.path().join(&r.path)).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn clip_shape_and_genres() {
        let (clip, f0, bpm) = synth_one(Instrument::Vio, 3, 1);
        assert_eq!(clip.len(), 132_300);
        assert!((60.0..=180.0).contains(&bpm));
        assert!(f0 > 300.0 && f0 < 1300.0);
        assert!(clip.peak() <= 0.5 + 1e-6);
        let dir = tempfile::tempdir().unwrap();
        let (recs, _) = synth_corpus(&[(Instrument::Cel, 5)], 0, dir.path()).unwrap();
        let genres: Vec<Genre> = recs.iter().map(|r| r.genre).collect();
        assert_eq!(genres[0], genres[4]);
        assert_ne!(genres[0], genres[1]);
    }

    #[test]
    fn test_tracks_have_two_distinct_labels() {
        for i in 0..20 {
            let (clip, pair) = synth_test_track(i, 9).unwrap();
            assert_ne!(pair[0], pair[1]);
            assert_eq!(clip.sample_rate, TARGET_RATE);
            assert_eq!(clip.len(), 3 * TARGET_RATE as usize);
            assert!(clip.peak() <= 1.0);
        }
        assert_eq!(synth_test_track(3, 9).unwrap(), synth_test_track(3, 9).unwrap());
    }
}
