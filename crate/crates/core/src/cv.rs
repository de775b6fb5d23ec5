//! Repeated stratified cross-validation: for every seed the data is split into
//! a held-out test set and `folds` validation folds, and one model is trained
//! per (fold, seed). The reported number for a trial is the test AUC of the
//! epoch with the best validation AUC.

use rayon::prelude::*;

use crate::data::{stratified_split, BagDataset, Split, Standardizer};
use crate::error::Result;
use crate::eval::Summary;
use crate::trainer::{train, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub seeds: Vec<u64>,
    pub test_frac: f64,
    /// z-score features with statistics of each trial's training split.
    pub standardize: bool,
    /// Learning rates tried per trial; the one with the best validation AUC
    /// is kept. Empty means "use the training config as is".
    pub lr_grid: Vec<f64>,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { folds: 5, seeds: vec![0, 1, 2], test_frac: 0.1, standardize: true, lr_grid: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub fold: usize,
    pub seed: u64,
    pub test_auc_at_best_val: f64,
    pub best_val_auc: f64,
    pub best_epoch: usize,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub fold: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub trials: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
}

impl CvReport {
    pub fn summary(&self) -> Option<Summary> {
        Summary::of(&self.trials.iter().map(|t| t.test_auc_at_best_val).collect::<Vec<_>>())
    }
}

/// Seed of the training run for one trial; distinct per (fold, seed).
pub fn trial_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (fold as u64 + 1).wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

/// Trains one trial and returns the best-validation result over the lr grid.
pub fn run_trial(split: &Split, cfg: &TrainConfig, cv: &CvConfig, fold: usize, seed: u64) -> Result<TrialResult> {
    let (train_ds, val, test) = if cv.standardize {
        let z = Standardizer::fit(&split.train);
        (z.apply(&split.train), z.apply(&split.val), z.apply(&split.test))
    } else {
        (split.train.clone(), split.val.clone(), split.test.clone())
    };
    let grid = if cv.lr_grid.is_empty() { vec![cfg.eta] } else { cv.lr_grid.clone() };
    let mut best: Option<TrialResult> = None;
    for eta in grid {
        let run_cfg = TrainConfig { eta, seed: trial_seed(seed, fold), ..cfg.clone() };
        let out = train(&train_ds, &val, &test, &run_cfg)?;
        let Some(row) = out.metrics.get(out.best_epoch.wrapping_sub(1)) else { continue };
        let result = TrialResult {
            fold,
            seed,
            test_auc_at_best_val: row.test_auc,
            best_val_auc: row.val_auc,
            best_epoch: out.best_epoch,
            eta,
        };
        if best.as_ref().is_none_or(|b| result.best_val_auc > b.best_val_auc) {
            best = Some(result);
        }
    }
    best.ok_or_else(|| crate::error::MidamError::Config("cross-validation needs at least one epoch".into()))
}

/// Runs every (fold, seed) trial; failed trials are reported, not fatal.
/// Trials run on the current rayon pool and results come back in
/// (seed, fold) order regardless of thread count.
pub fn run_cv(ds: &BagDataset, cfg: &TrainConfig, cv: &CvConfig) -> Result<CvReport> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &seed in &cv.seeds {
        for (fold, split) in stratified_split(ds, cv.folds, cv.test_frac, seed)?.into_iter().enumerate() {
            jobs.push((fold, seed, split));
        }
    }
    let outcomes: Vec<_> = jobs
        .par_iter()
        .map(|(fold, seed, split)| (*fold, *seed, run_trial(split, cfg, cv, *fold, *seed)))
        .collect();
    let mut report = CvReport { trials: Vec::new(), failures: Vec::new() };
    for (fold, seed, outcome) in outcomes {
        match outcome {
            Ok(t) => report.trials.push(t),
            Err(e) => report.failures.push(TrialFailure { fold, seed, error: e.to_string() }),
        }
    }
    Ok(report)
}
