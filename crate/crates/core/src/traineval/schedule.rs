use serde::{Deserialize, Serialize};

use polymix_nn::{BASE_LR, EPOCH_DECAY};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    pub base_lr: f64,
    pub epoch_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub stop_patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    /// Stop as soon as training-set LRAP exceeds this value.
    pub target_train_lrap: Option<f64>,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            base_lr: BASE_LR,
            epoch_decay: EPOCH_DECAY,
            batch_size: 128,
            max_epochs: 100,
            plateau_patience: 5,
            plateau_factor: 0.5,
            stop_patience: 7,
            min_delta: 1e-4,
            seed: 0,
            target_train_lrap: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Observation {
    pub improved: bool,
    pub lr_reduced: bool,
    pub stop: bool,
}

/// Plateau reduction and early stopping on a monitored loss. Epochs are
/// 0-based; a reduction takes effect from the next epoch.
#[derive(Clone, Debug)]
pub struct PlateauTracker {
    pub best: f64,
    pub best_epoch: Option<usize>,
    pub since_best: usize,
    pub since_reduce: usize,
    pub factor: f64,
}

impl Default for PlateauTracker {
    fn default() -> Self {
        PlateauTracker {
            best: f64::INFINITY,
            best_epoch: None,
            since_best: 0,
            since_reduce: 0,
            factor: 1.0,
        }
    }
}

impl PlateauTracker {
    pub fn observe(&mut self, epoch: usize, loss: f64, s: &Schedule) -> Observation {
        let mut obs = Observation::default();
        if loss < self.best - s.min_delta {
            self.best = loss;
            self.best_epoch = Some(epoch);
            self.since_best = 0;
            self.since_reduce = 0;
            obs.improved = true;
        } else {
            self.since_best += 1;
            self.since_reduce += 1;
        }
        if self.since_reduce >= s.plateau_patience {
            self.factor *= s.plateau_factor;
            self.since_reduce = 0;
            obs.lr_reduced = true;
        }
        obs.stop = self.since_best >= s.stop_patience;
        obs
    }

    pub fn lr(&self, epoch: usize, s: &Schedule) -> f64 {
        polymix_nn::effective_lr(s.base_lr, s.epoch_decay, epoch, self.factor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(losses: &[f64]) -> (Vec<Observation>, PlateauTracker) {
        let s = Schedule::default();
        let mut t = PlateauTracker::default();
        let mut out = Vec::new();
        for (e, &l) in losses.iter().enumerate() {
            let o = t.observe(e, l, &s);
            out.push(o);
            if o.stop {
                break;
            }
        }
        (out, t)
    }

    #[test]
    fn strictly_decreasing_never_reduces_or_stops() {
        let losses: Vec<f64> = (0..20).map(|e| 1.0 - 0.01 * e as f64).collect();
        let (obs, t) = run(&losses);
        assert_eq!(obs.len(), 20);
        assert!(obs.iter().all(|o| o.improved && !o.lr_reduced && !o.stop));
        assert_eq!(t.factor, 1.0);
    }

    #[test]
    fn flat_from_epoch_three() {
        let losses: Vec<f64> = (0..30).map(|e| if e < 3 { 1.0 - 0.1 * e as f64 } else { 0.7 }).collect();
        let (obs, t) = run(&losses);
        let reduced: Vec<usize> = (0..obs.len()).filter(|&e| obs[e].lr_reduced).collect();
        assert_eq!(reduced, vec![8]);
        assert_eq!(obs.len(), 11);
        assert!(obs[10].stop);
        assert_eq!(t.best_epoch, Some(3));
        assert_eq!(t.factor, 0.5);
        let s = Schedule::default();
        assert!((t.lr(9, &s) - 1e-4 * 0.9f64.powi(9) * 0.5).abs() < 1e-18);
    }

    #[test]
    fn sub_threshold_gains_do_not_count() {
        let losses = [1.0, 0.99995, 0.99991, 0.99992];
        let (obs, t) = run(&losses);
        assert!(obs[0].improved);
        assert!(!obs[1].improved && !obs[2].improved && !obs[3].improved);
        assert_eq!(t.best_epoch, Some(0));
    }
}
