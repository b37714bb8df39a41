//! Cross-validated training, track-level prediction, metrics and ensembles.

mod folds;
mod metrics;
mod predict;
mod report;
mod schedule;
mod train;

pub use folds::{make_folds, split_indices};
pub use metrics::{
    auc_scores, ensemble_average, f1_scores, lrap, read_predictions, write_predictions, AucScores, F1Scores,
    PredictionMatrix, F1_THRESHOLD,
};
pub use predict::{mean_rows, predict_track};
pub use report::{evaluate, f1_delta_table, format_pm, format_report, mean_std, summary_row, MetricsReport};
pub use schedule::{Observation, PlateauTracker, Schedule};
pub use train::{
    batch, predict_store, store_loss, store_predictions, train_fold, train_model, EpochRecord, History,
};
