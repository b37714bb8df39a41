use polymix::audio::AudioClip;
use polymix::dataset::{FeatureStore, Instrument, LabelVector, NUM_CLASSES};
use polymix::features::{spectrogram, N_BINS, N_FRAMES};
use polymix::traineval::{
    auc_scores, ensemble_average, f1_scores, lrap, make_folds, mean_rows, predict_track, read_predictions,
    split_indices, train_model, write_predictions, PredictionMatrix, Schedule, F1_THRESHOLD,
};
use polymix::Error;
use polymix_nn::{Model, ModelConfig, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Brute-force references straight from the pairwise definitions.

fn lrap_oracle(scores: &[f64], labels: &[u8], c: usize) -> f64 {
    let rows = scores.len() / c;
    let mut total = 0.0;
    for i in 0..rows {
        let f = &scores[i * c..(i + 1) * c];
        let y = &labels[i * c..(i + 1) * c];
        let n_true = y.iter().filter(|&&v| v == 1).count();
        let mut row = 0.0;
        for j in 0..c {
            if y[j] == 1 {
                let rank = (0..c).filter(|&k| f[k] >= f[j]).count();
                let true_rank = (0..c).filter(|&k| y[k] == 1 && f[k] >= f[j]).count();
                row += true_rank as f64 / rank as f64;
            }
        }
        total += row / n_true as f64;
    }
    total / rows as f64
}

fn auc_oracle(scores: &[f64], labels: &[u8], c: usize, k: usize) -> Option<f64> {
    let rows = scores.len() / c;
    let pos: Vec<f64> = (0..rows).filter(|&i| labels[i * c + k] == 1).map(|i| scores[i * c + k]).collect();
    let neg: Vec<f64> = (0..rows).filter(|&i| labels[i * c + k] == 0).map(|i| scores[i * c + k]).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut twice = 0u64;
    for p in &pos {
        for n in &neg {
            twice += if p > n { 2 } else if p == n { 1 } else { 0 };
        }
    }
    Some(twice as f64 / (2 * pos.len() * neg.len()) as f64)
}

fn f1_oracle(scores: &[f64], labels: &[u8], c: usize, k: usize) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for i in 0..scores.len() / c {
        let pred = scores[i * c + k] >= F1_THRESHOLD;
        let truth = labels[i * c + k] == 1;
        tp += (pred && truth) as u64;
        fp += (pred && !truth) as u64;
        fn_ += (!pred && truth) as u64;
    }
    if tp + fp + fn_ == 0 {
        0.0
    } else {
        (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Scores on a coarse grid so that ties are common; every row gets at least
/// one positive.
fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, c: usize) -> PredictionMatrix {
    let grid = rng.gen_range(2..12) as f64;
    let mut scores = Vec::with_capacity(rows * c);
    let mut labels = Vec::with_capacity(rows * c);
    for _ in 0..rows {
        let density = rng.gen_range(0.1..0.6);
        let mut row: Vec<u8> = (0..c).map(|_| rng.gen_bool(density) as u8).collect();
        if row.iter().all(|&v| v == 0) {
            row[rng.gen_range(0..c)] = 1;
        }
        labels.extend(row);
        scores.extend((0..c).map(|_| (rng.gen_range(0..=grid as u32) as f64) / grid));
    }
    let ids = (0..rows).map(|i| format!("t{i}")).collect();
    PredictionMatrix::new(ids, c, scores, labels).unwrap()
}

#[test]
fn metrics_match_pairwise_definitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..300 {
        let rows = rng.gen_range(1..40);
        let c = rng.gen_range(2..12);
        let pm = random_matrix(&mut rng, rows, c);
        assert_eq!(lrap(&pm).unwrap(), lrap_oracle(&pm.scores, &pm.labels, c));
        let oracle: Vec<Option<f64>> = (0..c).map(|k| auc_oracle(&pm.scores, &pm.labels, c, k)).collect();
        match auc_scores(&pm) {
            Ok(auc) => {
                assert_eq!(auc.per_class, oracle);
                let present: Vec<f64> = oracle.iter().flatten().copied().collect();
                assert_eq!(auc.mean, present.iter().sum::<f64>() / present.len() as f64);
            }
            Err(_) => assert!(oracle.iter().all(Option::is_none)),
        }
        let f1 = f1_scores(&pm, F1_THRESHOLD);
        let per: Vec<f64> = (0..c).map(|k| f1_oracle(&pm.scores, &pm.labels, c, k)).collect();
        assert_eq!(f1.per_class, per);
    }
}

#[test]
fn lrap_rejects_rows_without_labels() {
    let pm = PredictionMatrix::new(vec!["a".into()], 3, vec![0.1, 0.2, 0.3], vec![0, 0, 0]).unwrap();
    assert!(matches!(lrap(&pm), Err(Error::Contract(_))));
}

#[test]
fn lrap_ignores_monotone_rescaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let pm = random_matrix(&mut rng, 20, NUM_CLASSES);
        let mut warped = pm.clone();
        for s in &mut warped.scores {
            *s = s.powi(3) * 7.0 + 0.25;
        }
        assert_eq!(lrap(&pm).unwrap(), lrap(&warped).unwrap());
    }
}

#[test]
fn ensemble_of_copies_is_identity_and_csv_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pm = random_matrix(&mut rng, 12, NUM_CLASSES);
    for s in &mut pm.scores {
        *s = rng.gen::<f64>();
    }
    let avg = ensemble_average(&[pm.clone(), pm.clone(), pm.clone()]).unwrap();
    for (a, b) in avg.scores.iter().zip(&pm.scores) {
        assert!((a - b).abs() < 1e-15);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("preds.csv");
    write_predictions(&path, &pm).unwrap();
    assert_eq!(read_predictions(&path).unwrap(), pm);
}

fn single_label_set(per_class: &[usize]) -> Vec<LabelVector> {
    per_class
        .iter()
        .enumerate()
        .flat_map(|(k, &n)| std::iter::repeat(LabelVector::single(Instrument::from_index(k).unwrap())).take(n))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folds_balance_each_class(counts in proptest::collection::vec(5usize..30, 1..11), seed in any::<u64>()) {
        let labels = single_label_set(&counts);
        let folds = make_folds(&labels, 5, seed).unwrap();
        prop_assert_eq!(&folds, &make_folds(&labels, 5, seed).unwrap());
        for (k, &n) in counts.iter().enumerate() {
            let mut per_fold = [0usize; 5];
            for (l, &f) in labels.iter().zip(&folds) {
                if l.get(k) {
                    per_fold[f as usize] += 1;
                }
            }
            let (lo, hi) = (per_fold.iter().min().unwrap(), per_fold.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            prop_assert_eq!(per_fold.iter().sum::<usize>(), n);
        }
        for f in 0..5u8 {
            let (train, val) = split_indices(&folds, f);
            prop_assert_eq!(train.len() + val.len(), labels.len());
            prop_assert!(val.iter().all(|&i| folds[i] == f));
            prop_assert!(train.iter().all(|&i| folds[i] != f));
        }
    }
}

#[test]
fn folds_need_k_samples_per_class() {
    let labels = single_label_set(&[6, 4]);
    assert!(make_folds(&labels, 5, 0).is_err());
}

fn tiny_config() -> ModelConfig {
    ModelConfig::proposed()
        .with_depths([2, 2, 4, 4])
        .with_head_units(8)
}

fn tiny_store(seed: u64) -> FeatureStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = FeatureStore::new(N_BINS, N_FRAMES);
    for i in 0..24 {
        let class = i % 3;
        // A class-dependent horizontal band over background noise.
        let feature: Vec<f32> = (0..N_BINS * N_FRAMES)
            .map(|p| {
                let band = (p / N_FRAMES) / 32 == class;
                (band as u8 as f32) * 0.8 + rng.gen::<f32>() * 0.2
            })
            .collect();
        store
            .push(&feature, LabelVector::single(Instrument::from_index(class).unwrap()))
            .unwrap();
    }
    store
}

#[test]
fn training_is_bit_reproducible_and_restores_best_epoch() {
    let store = tiny_store(1);
    let schedule = Schedule {
        base_lr: 1e-3,
        batch_size: 8,
        max_epochs: 4,
        seed: 11,
        ..Schedule::default()
    };
    let run = || {
        let mut model = Model::<f32>::build(&tiny_config(), 3).unwrap();
        let history = train_model(&mut model, &store, None, &schedule).unwrap();
        (model, history)
    };
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(a.params(), b.params());
    assert_eq!(ha, hb);
    assert_eq!(ha.epochs.len(), 4);
    let best = ha.best_epoch.unwrap();
    let min = ha.epochs.iter().map(|e| e.train_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(ha.epochs[best].train_loss, min);
}

#[test]
fn predict_track_averages_whole_seconds() {
    let model = Model::<f32>::build(&tiny_config(), 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let samples: Vec<f32> = (0..55_125).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let track = AudioClip::mono(samples, 22_050);
    let got = predict_track(&model, &track).unwrap();

    let mut x = Vec::new();
    for k in 0..2 {
        x.extend(spectrogram(&track.slice(k * 22_050, (k + 1) * 22_050)).unwrap());
    }
    let scores = model.predict(&Tensor::from_vec(&[2, 1, N_BINS, N_FRAMES], x).unwrap()).unwrap();
    assert_eq!(got, mean_rows(scores.data(), NUM_CLASSES));

    let short = AudioClip::mono(vec![0.1; 11_025], 22_050);
    assert!(matches!(predict_track(&model, &short), Err(Error::TooShort { .. })));
}
