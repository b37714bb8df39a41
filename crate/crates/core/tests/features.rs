use polymix::audio::{standardize, AudioClip, TARGET_RATE};
use polymix::dataset::{read_store, synth_one, write_store, Instrument, LabelVector};
use polymix::features::{argmax_per_frame, bin_frequency, cqt, extract_store, spectrogram, N_BINS, N_FRAMES};
use polymix::pitchsync::shift_samples;

fn tone(freq: f64, amp: f64) -> AudioClip {
    AudioClip::mono(
        (0..22_050)
            .map(|i| (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 22_050.0).sin()) as f32)
            .collect(),
        TARGET_RATE,
    )
}

fn dominant_bin(mag: &[f64]) -> usize {
    let arg = argmax_per_frame(mag, N_FRAMES);
    let mut counts = [0usize; N_BINS];
    for &k in &arg[4..N_FRAMES - 4] {
        counts[k] += 1;
    }
    (0..N_BINS).max_by_key(|&k| counts[k]).unwrap()
}

#[test]
fn bin_centres_follow_the_log_grid() {
    assert!((bin_frequency(0) - 32.703).abs() < 1e-9);
    assert!((bin_frequency(48) - 523.25).abs() < 0.01);
    assert!((bin_frequency(95) / bin_frequency(83) - 2.0).abs() < 1e-12);
}

#[test]
fn magnitudes_scale_linearly_and_scaled_output_does_not() {
    let a = cqt(&tone(330.0, 0.2)).unwrap();
    let b = cqt(&tone(330.0, 0.6)).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((3.0 * x - y).abs() < 1e-6 * (1.0 + y));
    }
    let sa = spectrogram(&tone(330.0, 0.2)).unwrap();
    let sb = spectrogram(&tone(330.0, 0.6)).unwrap();
    for (x, y) in sa.iter().zip(&sb) {
        assert!((x - y).abs() < 1e-4);
    }
    assert!(sa.iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn octave_up_moves_the_peak_twelve_bins() {
    let base = tone(220.0, 0.5);
    let up = AudioClip::mono(shift_samples(&base.samples, 12), TARGET_RATE);
    let k0 = dominant_bin(&cqt(&base).unwrap());
    let k1 = dominant_bin(&cqt(&up).unwrap());
    assert_eq!(k0, 33);
    assert_eq!(k1, k0 + 12);
}

#[test]
fn extracted_store_round_trips() {
    let items: Vec<(AudioClip, LabelVector)> = [Instrument::Flu, Instrument::Tru]
        .iter()
        .enumerate()
        .map(|(i, &inst)| {
            let (clip, _, _) = synth_one(inst, i, 4);
            let clip = standardize(&clip, TARGET_RATE, 0.1).unwrap();
            (clip.slice(0, 22_050), LabelVector::single(inst))
        })
        .collect();
    let refs: Vec<(&AudioClip, LabelVector)> = items.iter().map(|(c, l)| (c, *l)).collect();
    let store = extract_store(&refs).unwrap();
    assert_eq!(store.len(), 2);
    assert_eq!(store.feature(1), spectrogram(&items[1].0).unwrap().as_slice());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.cqts");
    write_store(&store, &path).unwrap();
    let back = read_store(&path).unwrap();
    assert_eq!(back.labels(), store.labels());
    assert_eq!(back.feature(0), store.feature(0));
}
