use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{LabelVector, CODES, NUM_CLASSES};
use crate::error::{Error, Result};

/// Row-aligned scores and binary labels, `rows x classes`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionMatrix {
    pub ids: Vec<String>,
    pub classes: usize,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl PredictionMatrix {
    pub fn new(ids: Vec<String>, classes: usize, scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != ids.len() * classes || labels.len() != scores.len() {
            return Err(Error::Contract(format!(
                "prediction matrix of {} rows x {classes} classes given {} scores and {} labels",
                ids.len(),
                scores.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Contract("labels must be 0 or 1".into()));
        }
        Ok(PredictionMatrix {
            ids,
            classes,
            scores,
            labels,
        })
    }

    pub fn from_rows(ids: Vec<String>, scores: &[Vec<f64>], labels: &[LabelVector]) -> Result<Self> {
        let flat_scores = scores.iter().flatten().copied().collect();
        let flat_labels = labels.iter().flat_map(|l| l.to_bytes()).collect();
        Self::new(ids, NUM_CLASSES, flat_scores, flat_labels)
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn score_row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.classes..(i + 1) * self.classes]
    }

    pub fn label_row(&self, i: usize) -> &[u8] {
        &self.labels[i * self.classes..(i + 1) * self.classes]
    }
}

/// Label ranking average precision; ties resolved by the `>=` counts.
pub fn lrap(pm: &PredictionMatrix) -> Result<f64> {
    if pm.rows() == 0 {
        return Err(Error::Contract("LRAP of an empty prediction matrix".into()));
    }
    let c = pm.classes;
    let mut total = 0.0;
    let mut order: Vec<usize> = Vec::with_capacity(c);
    let mut rank = vec![0usize; c];
    let mut true_rank = vec![0usize; c];
    for i in 0..pm.rows() {
        let f = pm.score_row(i);
        let y = pm.label_row(i);
        let n_true = y.iter().filter(|&&v| v == 1).count();
        if n_true == 0 {
            return Err(Error::Contract(format!("row {i} ({}) has no true labels", pm.ids[i])));
        }
        // Descending scores; rank_j = |{k: f_k >= f_j}| is the end of j's tie block.
        order.clear();
        order.extend(0..c);
        order.sort_by(|&a, &b| f[b].total_cmp(&f[a]));
        let mut start = 0;
        let mut seen_true = 0;
        while start < c {
            let mut end = start;
            let mut block_true = 0;
            while end < c && f[order[end]] == f[order[start]] {
                block_true += y[order[end]] as usize;
                end += 1;
            }
            seen_true += block_true;
            for &j in &order[start..end] {
                rank[j] = end;
                true_rank[j] = seen_true;
            }
            start = end;
        }
        let mut row = 0.0;
        for j in 0..c {
            if y[j] == 1 {
                row += true_rank[j] as f64 / rank[j] as f64;
            }
        }
        total += row / n_true as f64;
    }
    Ok(total / pm.rows() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucScores {
    /// `None` for classes lacking positives or negatives.
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

/// ROC AUC per class from midrank sums (ties count one half).
pub fn auc_scores(pm: &PredictionMatrix) -> Result<AucScores> {
    let n = pm.rows();
    let mut per_class = Vec::with_capacity(pm.classes);
    let mut col: Vec<(f64, u8)> = Vec::with_capacity(n);
    for k in 0..pm.classes {
        col.clear();
        col.extend((0..n).map(|i| (pm.scores[i * pm.classes + k], pm.labels[i * pm.classes + k])));
        let n_pos = col.iter().filter(|v| v.1 == 1).count() as u64;
        let n_neg = n as u64 - n_pos;
        if n_pos == 0 || n_neg == 0 {
            per_class.push(None);
            continue;
        }
        col.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Twice the positive rank sum, with 1-based midranks 2r = start + end + 1.
        let mut twice_rank_sum: u64 = 0;
        let mut start = 0;
        while start < n {
            let mut end = start;
            let mut pos = 0u64;
            while end < n && col[end].0 == col[start].0 {
                pos += col[end].1 as u64;
                end += 1;
            }
            twice_rank_sum += pos * (start + end + 1) as u64;
            start = end;
        }
        let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
        per_class.push(Some(twice_u as f64 / (2 * n_pos * n_neg) as f64));
    }
    let scored: Vec<f64> = per_class.iter().flatten().copied().collect();
    if scored.is_empty() {
        return Err(Error::Contract("no class has both positive and negative examples".into()));
    }
    let mean = scored.iter().sum::<f64>() / scored.len() as f64;
    Ok(AucScores { per_class, mean })
}

pub const F1_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub micro: f64,
    pub macro_avg: f64,
    pub per_class: Vec<f64>,
}

fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// F1 after binarizing `score >= threshold`; 0/0 counts as 0.
pub fn f1_scores(pm: &PredictionMatrix, threshold: f64) -> F1Scores {
    let c = pm.classes;
    let mut counts = vec![(0u64, 0u64, 0u64); c];
    for (idx, (&s, &y)) in pm.scores.iter().zip(&pm.labels).enumerate() {
        let entry = &mut counts[idx % c];
        match (s >= threshold, y == 1) {
            (true, true) => entry.0 += 1,
            (true, false) => entry.1 += 1,
            (false, true) => entry.2 += 1,
            (false, false) => {}
        }
    }
    let per_class: Vec<f64> = counts.iter().map(|&(tp, fp, fn_)| f1(tp, fp, fn_)).collect();
    let (tp, fp, fn_) = counts
        .iter()
        .fold((0, 0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2));
    F1Scores {
        micro: f1(tp, fp, fn_),
        macro_avg: per_class.iter().sum::<f64>() / c.max(1) as f64,
        per_class,
    }
}

/// Element-wise mean of scores over matrices sharing ids and labels.
pub fn ensemble_average(preds: &[PredictionMatrix]) -> Result<PredictionMatrix> {
    let first = preds
        .first()
        .ok_or_else(|| Error::Contract("ensemble of zero prediction sets".into()))?;
    for p in &preds[1..] {
        if p.classes != first.classes || p.ids != first.ids || p.labels != first.labels {
            return Err(Error::Contract("ensemble members differ in rows, classes or labels".into()));
        }
    }
    let n = preds.len() as f64;
    let scores = (0..first.scores.len())
        .map(|i| preds.iter().map(|p| p.scores[i]).sum::<f64>() / n)
        .collect();
    Ok(PredictionMatrix {
        scores,
        ..first.clone()
    })
}

/// CSV with `track_id`, one `score_<code>` and one `label_<code>` column per class.
pub fn write_predictions(path: &Path, pm: &PredictionMatrix) -> Result<()> {
    if pm.classes != NUM_CLASSES {
        return Err(Error::Contract(format!("prediction files hold {NUM_CLASSES} classes")));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["track_id".to_string()];
    header.extend(CODES.iter().map(|c| format!("score_{c}")));
    header.extend(CODES.iter().map(|c| format!("label_{c}")));
    w.write_record(&header)?;
    for i in 0..pm.rows() {
        let mut rec = vec![pm.ids[i].clone()];
        rec.extend(pm.score_row(i).iter().map(|s| s.to_string()));
        rec.extend(pm.label_row(i).iter().map(|l| l.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<PredictionMatrix> {
    let mut r = csv::Reader::from_path(path)?;
    let expected = 1 + 2 * NUM_CLASSES;
    if r.headers()?.len() != expected {
        return Err(Error::Validation {
            line: 1,
            msg: format!("expected {expected} columns"),
        });
    }
    let mut ids = Vec::new();
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |msg: String| Error::Validation { line, msg };
        if rec.len() != expected {
            return Err(bad(format!("expected {expected} fields, got {}", rec.len())));
        }
        ids.push(rec[0].to_string());
        for v in rec.iter().skip(1).take(NUM_CLASSES) {
            scores.push(v.parse::<f64>().map_err(|e| bad(format!("score `{v}`: {e}")))?);
        }
        for v in rec.iter().skip(1 + NUM_CLASSES) {
            labels.push(match v {
                "0" => 0,
                "1" => 1,
                _ => return Err(bad(format!("label `{v}` is not 0 or 1"))),
            });
        }
    }
    PredictionMatrix::new(ids, NUM_CLASSES, scores, labels)
}
