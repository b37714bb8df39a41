use std::collections::{BTreeMap, HashMap};

use polymix::audio::{standardize, AudioClip, TARGET_RATE, TARGET_RMS};
use polymix::dataset::{synth_one, Genre, Instrument, LabelVector};
use polymix::mixing::{build_mixed_dataset, pitch_shift_augment, Corpus, MixConfig, MixDetail, MixStrategy, SourceClip};
use polymix::pitchsync::{cents, track_pitch};

fn corpus(counts: &[(Instrument, usize)], seed: u64) -> Corpus {
    let mut parents = Vec::new();
    for &(inst, n) in counts {
        for i in 0..n {
            let (clip, _, _) = synth_one(inst, i, seed);
            parents.push(SourceClip {
                id: format!("{}_{i}", inst.code()),
                instrument: inst,
                genre: Genre::ALL[i % 4],
                clip: standardize(&clip, TARGET_RATE, TARGET_RMS).unwrap(),
            });
        }
    }
    Corpus { parents }
}

fn per_pair(records: &[polymix::mixing::MixedRecord]) -> BTreeMap<LabelVector, usize> {
    let mut m = BTreeMap::new();
    for r in records {
        *m.entry(r.labels).or_insert(0) += 1;
    }
    m
}

fn cfg(strategy: MixStrategy, seed: u64) -> MixConfig {
    MixConfig {
        strategy,
        seed,
        max_per_pair: None,
    }
}

#[test]
fn random_mixing_covers_55_pairs_with_min_counts() {
    let counts: Vec<(Instrument, usize)> = Instrument::ALL.iter().map(|&i| (i, 1 + i.index() % 3)).collect();
    let c = corpus(&counts, 4);
    let out = build_mixed_dataset(&c, &cfg(MixStrategy::Random, 9)).unwrap();
    let pairs = per_pair(&out.records);
    assert_eq!(pairs.len(), 55);
    let seg_count: HashMap<Instrument, usize> = counts.iter().map(|&(i, n)| (i, 3 * n)).collect();
    for (labels, n) in &pairs {
        let insts = labels.instruments();
        assert_eq!(insts.len(), 2);
        assert_eq!(*n, seg_count[&insts[0]].min(seg_count[&insts[1]]));
    }
    for r in &out.records {
        assert_eq!(r.labels.count(), 2);
        assert_eq!(r.clip.len(), 22050);
        assert_eq!(r.detail, MixDetail::Overlay);
    }
    let again = build_mixed_dataset(&c, &cfg(MixStrategy::Random, 9)).unwrap();
    assert_eq!(out.records, again.records);
}

#[test]
fn genre_mixing_uses_bucket_minima() {
    let c = corpus(&[(Instrument::Cel, 5), (Instrument::Flu, 2)], 1);
    let out = build_mixed_dataset(&c, &cfg(MixStrategy::Genre, 3)).unwrap();
    // Cel parents by genre: 2,1,1,1 (x3 segments); flu: 1,1,0,0.
    assert_eq!(out.records.len(), 3 + 3);
    let genre_of: HashMap<String, Genre> = c
        .segments()
        .into_iter()
        .map(|s| (s.id, s.genre))
        .collect();
    for r in &out.records {
        assert_eq!(genre_of[&r.sources.0], genre_of[&r.sources.1]);
    }
}

#[test]
fn pitch_and_tempo_strategies() {
    let c = corpus(&[(Instrument::Cla, 2), (Instrument::Org, 2), (Instrument::Pia, 1)], 2);
    for strategy in [MixStrategy::Pitch, MixStrategy::Tempo] {
        let out = build_mixed_dataset(&c, &cfg(strategy, 5)).unwrap();
        let pairs = per_pair(&out.records);
        assert_eq!(pairs.len(), 3);
        assert_eq!(out.records.len() + 3 * out.skipped.len(), 6 + 3 + 3);
        for r in &out.records {
            assert_eq!(r.labels.count(), 2);
            assert_eq!(r.clip.len(), 22050);
            match (&r.detail, strategy) {
                (MixDetail::Pitch { plan }, MixStrategy::Pitch) => assert_eq!(plan.n_frames(), 100),
                (MixDetail::Tempo { ratio, .. }, MixStrategy::Tempo) => assert!((0.5..=2.0).contains(ratio)),
                other => panic!("unexpected detail {other:?}"),
            }
        }
        let again = build_mixed_dataset(&c, &cfg(strategy, 5)).unwrap();
        assert_eq!(out.records, again.records);
    }
}

#[test]
fn cap_limits_records_per_pair() {
    let c = corpus(&[(Instrument::Gac, 3), (Instrument::Voi, 3)], 0);
    for strategy in MixStrategy::ALL {
        let out = build_mixed_dataset(
            &c,
            &MixConfig {
                strategy,
                seed: 1,
                max_per_pair: Some(4),
            },
        )
        .unwrap();
        assert!(out.records.len() <= 4, "{strategy}");
    }
}

#[test]
fn single_class_is_rejected() {
    let c = corpus(&[(Instrument::Sax, 2)], 0);
    assert!(build_mixed_dataset(&c, &cfg(MixStrategy::Random, 0)).is_err());
}

fn tone_source(id: usize, freq: f64) -> SourceClip {
    SourceClip {
        id: format!("tone{id}"),
        instrument: Instrument::Flu,
        genre: Genre::Classical,
        clip: AudioClip::mono(
            (0..22050)
                .map(|i| (0.3 * (2.0 * std::f64::consts::PI * freq * i as f64 / 22050.0).sin()) as f32)
                .collect(),
            22050,
        ),
    }
}

#[test]
fn augmentation_shifts_and_counts() {
    let out = pitch_shift_augment(&[tone_source(0, 220.0)], &[2], 1, 0).unwrap();
    let t = track_pitch(&out[0].clip).unwrap();
    for &f in &t.f0[3..97] {
        assert!(cents(f, 246.94).abs() < 25.0, "{f}");
    }
    assert_eq!(out[0].labels, LabelVector::single(Instrument::Flu));

    let src = tone_source(1, 300.0);
    let same = pitch_shift_augment(std::slice::from_ref(&src), &[0], 2, 0).unwrap();
    assert!(same.iter().all(|r| r.clip == src.clip));

    let many: Vec<SourceClip> = (0..100).map(|i| tone_source(i, 200.0 + i as f64)).collect();
    let aug = pitch_shift_augment(&many, &[-6, -4, -2, 2, 4, 6], 500, 3).unwrap();
    assert_eq!(aug.len(), 500);
    let mut uses: HashMap<&str, usize> = HashMap::new();
    for r in &aug {
        *uses.entry(r.source.as_str()).or_insert(0) += 1;
    }
    assert!(uses.values().all(|&n| n <= 5));
    assert!(pitch_shift_augment(&many, &[3], 1, 0).is_err());
}
