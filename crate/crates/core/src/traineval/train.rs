use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use polymix_nn::{bce_loss, AdamState, Mode, Model, Tensor};

use super::folds::split_indices;
use super::metrics::{lrap, PredictionMatrix};
use super::schedule::{PlateauTracker, Schedule};
use crate::dataset::{FeatureStore, NUM_CLASSES};
use crate::error::{Error, Result};

const EVAL_BATCH: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub train_lrap: Option<f64>,
    pub improved: bool,
    pub lr_reduced: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

fn input_shape(model: &Model<f32>, store: &FeatureStore) -> Result<[usize; 3]> {
    let input = model.config().input;
    if [store.rows, store.cols] != input[1..] {
        return Err(Error::Contract(format!(
            "store samples are {}x{}, model expects {input:?}",
            store.rows, store.cols
        )));
    }
    Ok(input)
}

/// Stack rows of `store` into an input batch and a target matrix.
pub fn batch(store: &FeatureStore, input: [usize; 3], idx: &[usize]) -> (Tensor<f32>, Tensor<f32>) {
    let mut x = Vec::with_capacity(idx.len() * store.sample_len());
    let mut y = Vec::with_capacity(idx.len() * NUM_CLASSES);
    for &i in idx {
        x.extend_from_slice(store.feature(i));
        y.extend_from_slice(&store.label(i).to_f32());
    }
    let shape = [idx.len(), input[0], input[1], input[2]];
    (
        Tensor::from_vec(&shape, x).expect("sized above"),
        Tensor::from_vec(&[idx.len(), NUM_CLASSES], y).expect("sized above"),
    )
}

/// Inference-mode scores for every row, `rows x classes`, in row order.
/// Batches run in parallel; each batch's result is independent of scheduling.
pub fn predict_store(model: &Model<f32>, store: &FeatureStore) -> Result<Vec<f32>> {
    let input = input_shape(model, store)?;
    let idx: Vec<usize> = (0..store.len()).collect();
    let parts = idx
        .par_chunks(EVAL_BATCH)
        .map(|chunk| {
            let (x, _) = batch(store, input, chunk);
            Ok(model.predict(&x)?.into_data())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.concat())
}

/// Mean BCE over all entries of `store`.
pub fn store_loss(model: &Model<f32>, store: &FeatureStore) -> Result<f64> {
    let scores = predict_store(model, store)?;
    let targets: Vec<f32> = store.labels().iter().flat_map(|l| l.to_f32()).collect();
    let n = store.len();
    let s = Tensor::from_vec(&[n, NUM_CLASSES], scores).expect("sized");
    let t = Tensor::from_vec(&[n, NUM_CLASSES], targets).expect("sized");
    Ok(bce_loss(&s, &t).0)
}

pub fn store_predictions(model: &Model<f32>, store: &FeatureStore) -> Result<PredictionMatrix> {
    let scores = predict_store(model, store)?;
    let labels = store.labels().iter().flat_map(|l| l.to_bytes()).collect();
    PredictionMatrix::new(
        (0..store.len()).map(|i| i.to_string()).collect(),
        NUM_CLASSES,
        scores.iter().map(|&s| s as f64).collect(),
        labels,
    )
}

/// Train on `train`, monitoring validation loss when `val` is given and
/// training loss otherwise. Parameters from the best monitored epoch are
/// restored before returning. Single-threaded and bit-reproducible for a
/// fixed model seed and schedule.
pub fn train_model(
    model: &mut Model<f32>,
    train: &FeatureStore,
    val: Option<&FeatureStore>,
    schedule: &Schedule,
) -> Result<History> {
    if train.is_empty() {
        return Err(Error::Contract("empty training partition".into()));
    }
    let input = input_shape(model, train)?;
    if schedule.batch_size == 0 {
        return Err(Error::Contract("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    model.reseed_dropout(schedule.seed ^ 0xD1B5_4A32_D192_ED03);
    model.bn_batch_stats = true;
    let mut adam = AdamState::for_model(model);
    let mut tracker = PlateauTracker::default();
    let mut best = model.clone();
    let mut history = History::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..schedule.max_epochs {
        let lr = tracker.lr(epoch, schedule);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(schedule.batch_size) {
            let (x, y) = batch(train, input, chunk);
            let scores = model.forward(&x, Mode::Train)?;
            loss_sum += bce_loss(&scores, &y).0 * chunk.len() as f64;
            model.zero_grad();
            model.backward(&y)?;
            adam.step_model(model, lr);
        }
        model.clear_cache();
        let train_loss = loss_sum / train.len() as f64;
        let val_loss = val.map(|v| store_loss(model, v)).transpose()?;
        let train_lrap = match schedule.target_train_lrap {
            Some(_) => Some(lrap(&store_predictions(model, train)?)?),
            None => None,
        };
        let monitored = val_loss.unwrap_or(train_loss);
        let obs = tracker.observe(epoch, monitored, schedule);
        if obs.improved {
            best = model.clone();
        }
        if obs.lr_reduced {
            log::info!("epoch {epoch}: loss plateau, learning-rate factor now {}", tracker.factor);
        }
        log::debug!("epoch {epoch}: lr {lr:.3e} train {train_loss:.5} val {val_loss:?} lrap {train_lrap:?}");
        history.epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_loss,
            train_lrap,
            improved: obs.improved,
            lr_reduced: obs.lr_reduced,
        });
        if obs.stop {
            log::info!("epoch {epoch}: early stop, best epoch {:?}", tracker.best_epoch);
            history.stopped_early = true;
            break;
        }
        if let (Some(target), Some(l)) = (schedule.target_train_lrap, train_lrap) {
            if l > target {
                // The current weights reached the target; keep them.
                best = model.clone();
                tracker.best_epoch = Some(epoch);
                break;
            }
        }
    }
    model.load_state_from(&best);
    history.best_epoch = tracker.best_epoch;
    Ok(history)
}

/// Train on every fold but `val_fold` and validate on it.
pub fn train_fold(
    model: &mut Model<f32>,
    store: &FeatureStore,
    folds: &[u8],
    val_fold: u8,
    schedule: &Schedule,
) -> Result<History> {
    if folds.len() != store.len() {
        return Err(Error::Contract("fold assignment does not match the store".into()));
    }
    let (train_idx, val_idx) = split_indices(folds, val_fold);
    let train = store.select(&train_idx);
    let val = store.select(&val_idx);
    train_model(model, &train, (!val.is_empty()).then_some(&val), schedule)
}
