use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::metrics::{auc_scores, f1_scores, lrap, PredictionMatrix, F1_THRESHOLD};
use crate::dataset::CODES;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tracks: usize,
    pub lrap: f64,
    pub mean_auc: f64,
    pub per_class_auc: Vec<Option<f64>>,
    pub f1_micro: f64,
    pub f1_macro: f64,
    pub per_class_f1: Vec<f64>,
    /// Positive tracks per class.
    pub class_counts: Vec<usize>,
}

pub fn evaluate(pm: &PredictionMatrix) -> Result<MetricsReport> {
    let auc = auc_scores(pm)?;
    let f1 = f1_scores(pm, F1_THRESHOLD);
    let class_counts = (0..pm.classes)
        .map(|k| (0..pm.rows()).filter(|&i| pm.label_row(i)[k] == 1).count())
        .collect();
    Ok(MetricsReport {
        tracks: pm.rows(),
        lrap: lrap(pm)?,
        mean_auc: auc.mean,
        per_class_auc: auc.per_class,
        f1_micro: f1.micro,
        f1_macro: f1.macro_avg,
        per_class_f1: f1.per_class,
        class_counts,
    })
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn format_pm(values: &[f64]) -> String {
    let (m, s) = mean_std(values);
    format!("{m:.3} ± {s:.3}")
}

/// Headline metrics, one line per run, with `mean ± std` over reports.
pub fn summary_row(name: &str, reports: &[MetricsReport]) -> String {
    let col = |f: fn(&MetricsReport) -> f64| format_pm(&reports.iter().map(f).collect::<Vec<_>>());
    format!(
        "{name:<14} LRAP {}  AUC {}  F1 micro {}  F1 macro {}",
        col(|r| r.lrap),
        col(|r| r.mean_auc),
        col(|r| r.f1_micro),
        col(|r| r.f1_macro)
    )
}

pub fn format_report(r: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "tracks    {}", r.tracks);
    let _ = writeln!(out, "LRAP      {:.4}", r.lrap);
    let _ = writeln!(out, "mean AUC  {:.4}", r.mean_auc);
    let _ = writeln!(out, "F1 micro  {:.4}", r.f1_micro);
    let _ = writeln!(out, "F1 macro  {:.4}", r.f1_macro);
    let _ = writeln!(out, "class  count     AUC      F1");
    for (k, code) in CODES.iter().enumerate().take(r.per_class_f1.len()) {
        let auc = r.per_class_auc[k].map_or("     -".to_string(), |a| format!("{a:.4}"));
        let _ = writeln!(out, "{code:<5} {:>6}  {auc:>6}  {:.4}", r.class_counts[k], r.per_class_f1[k]);
    }
    out
}

/// Per-class F1 of `r` minus that of `baseline`.
pub fn f1_delta_table(r: &MetricsReport, baseline: &MetricsReport, baseline_name: &str) -> String {
    let mut out = format!("class  F1      vs {baseline_name}\n");
    for (k, code) in CODES.iter().enumerate().take(r.per_class_f1.len()) {
        let d = r.per_class_f1[k] - baseline.per_class_f1[k];
        let _ = writeln!(out, "{code:<5}  {:.4}  {d:+.4}", r.per_class_f1[k]);
    }
    out
}
