//! Exact AUC, full-bag scoring and metric records.

use std::cmp::Ordering;
use std::fmt;

use crate::data::BagDataset;
use crate::error::{MidamError, Result};
use crate::model::ModelParams;
use crate::objective::predict_all;
use crate::pooling::PoolKind;

/// Mann-Whitney AUC with ties counted as one half, via midranks in
/// `O((P + N) log(P + N))`.
pub fn auc(scores_pos: &[f64], scores_neg: &[f64]) -> Result<f64> {
    if scores_pos.is_empty() || scores_neg.is_empty() {
        return Err(MidamError::Argument("AUC needs at least one positive and one negative score".into()));
    }
    if scores_pos.iter().chain(scores_neg).any(|s| s.is_nan()) {
        return Err(MidamError::Numeric("NaN score".into()));
    }
    let mut all: Vec<(f64, bool)> = scores_pos
        .iter()
        .map(|&s| (s, true))
        .chain(scores_neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal));

    // sum of doubled midranks of the positives keeps everything integral
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j, doubled midrank = i + 1 + j
        let n_pos_tied = all[i..j].iter().filter(|(_, pos)| *pos).count() as u128;
        twice_rank_sum += n_pos_tied * (i + 1 + j) as u128;
        i = j;
    }
    let p = scores_pos.len() as u128;
    let n = scores_neg.len() as u128;
    // 2U = 2·R_pos − P(P+1)
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

/// Deterministic full-bag predictions, split by class.
#[derive(Debug, Clone, PartialEq)]
pub struct BagScores {
    pub scores: Vec<f64>,
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

impl BagScores {
    pub fn from_predictions(ds: &BagDataset, scores: Vec<f64>) -> Self {
        let pos = ds.pos_index().iter().map(|&i| scores[i]).collect();
        let neg = ds.neg_index().iter().map(|&i| scores[i]).collect();
        Self { scores, pos, neg }
    }

    pub fn auc(&self) -> Result<f64> {
        auc(&self.pos, &self.neg)
    }

    pub fn mean_pos(&self) -> f64 {
        self.pos.iter().sum::<f64>() / self.pos.len() as f64
    }

    pub fn mean_neg(&self) -> f64 {
        self.neg.iter().sum::<f64>() / self.neg.len() as f64
    }
}

/// Scores every bag with full-bag pooling; never uses tracked estimates.
pub fn score_dataset(p: &ModelParams, ds: &BagDataset, kind: PoolKind) -> Result<BagScores> {
    Ok(BagScores::from_predictions(ds, predict_all(p, ds, kind)?))
}

/// One epoch of training diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_auc: f64,
    pub val_auc: f64,
    pub test_auc: f64,
    pub objective: f64,
    pub upsilon_pos: Option<f64>,
    pub upsilon_neg: Option<f64>,
    pub alpha: f64,
    pub lr: f64,
    pub wall_ms: u64,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str =
        "epoch,train_auc,val_auc,test_auc,objective,upsilon_pos,upsilon_neg,alpha,lr,wall_ms";

    pub fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.train_auc,
            self.val_auc,
            self.test_auc,
            self.objective,
            opt(self.upsilon_pos),
            opt(self.upsilon_neg),
            self.alpha,
            self.lr,
            self.wall_ms
        )
    }

    /// Sum of both class errors, when the diagnostic ran this epoch.
    pub fn upsilon_total(&self) -> Option<f64> {
        Some(self.upsilon_pos? + self.upsilon_neg?)
    }
}

pub fn write_metrics_csv<W: std::io::Write>(rows: &[MetricsRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", MetricsRow::CSV_HEADER)?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one value).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, n })
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}({:.3})", self.mean, self.std)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        assert_eq!(auc(&[0.9], &[0.1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5], &[0.5]).unwrap(), 0.5);
        assert_eq!(auc(&[0.8, 0.4], &[0.6, 0.2]).unwrap(), 0.75);
        assert_eq!(auc(&[0.1], &[0.9]).unwrap(), 0.0);
        assert!(auc(&[], &[0.1]).is_err());
        assert!(auc(&[f64::NAN], &[0.1]).is_err());
    }

    #[test]
    fn all_ties() {
        assert_eq!(auc(&[0.5; 7], &[0.5; 3]).unwrap(), 0.5);
    }

    #[test]
    fn summary_uses_sample_std() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Summary::of(&[0.7]).unwrap().std, 0.0);
        assert!(Summary::of(&[]).is_none());
        assert_eq!(format!("{}", Summary { mean: 0.834, std: 0.12, n: 15 }), "0.834(0.120)");
    }

    #[test]
    fn metrics_line_leaves_skipped_diagnostics_empty() {
        let r = MetricsRow {
            epoch: 3,
            train_auc: 1.0,
            val_auc: 0.5,
            test_auc: 0.75,
            objective: 0.25,
            upsilon_pos: None,
            upsilon_neg: None,
            alpha: 0.0,
            lr: 0.1,
            wall_ms: 12,
        };
        assert_eq!(r.csv_line(), "3,1,0.5,0.75,0.25,,,0,0.1,12");
        assert_eq!(MetricsRow::CSV_HEADER.split(',').count(), r.csv_line().split(',').count());
    }
}
