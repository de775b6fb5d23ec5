//! Diagnostics: frozen-model comparison of tracked versus naive mini-batch
//! pooling, and helpers for batch-size sweeps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::BagDataset;
use crate::error::{MidamError, Result};
use crate::eval::MetricsRow;
use crate::model::ModelParams;
use crate::pooling::{outer_f2, pool_full, PoolKind, SubsetForward};
use crate::sampler::sample_instances;
use crate::vrsp::PoolState;

/// Mean squared error of pooled predictions against the full-bag prediction,
/// averaged over every bag and round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenComparison {
    pub vrsp_mse: f64,
    pub naive_mse: f64,
}

impl FrozenComparison {
    pub fn vrsp_wins(&self) -> bool {
        self.vrsp_mse < self.naive_mse
    }
}

/// With the model held fixed, every round draws `b` instances from each bag,
/// updates the tracked estimate, and compares `f2(s)` and the naive
/// mini-batch prediction with the exact `h`.
pub fn frozen_comparison(
    p: &ModelParams,
    ds: &BagDataset,
    kind: PoolKind,
    b: usize,
    gamma0: f64,
    rounds: usize,
    seed: u64,
) -> Result<FrozenComparison> {
    if !kind.is_compositional() {
        return Err(MidamError::Argument(format!("{kind} pooling has no tracked estimator")));
    }
    if rounds == 0 || ds.is_empty() {
        return Err(MidamError::Argument("need at least one round and one bag".into()));
    }
    let exact: Vec<f64> = ds.bags().iter().map(|bag| pool_full(p, bag, kind)).collect::<Result<_>>()?;
    let mut state = PoolState::init(ds, kind, gamma0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut vrsp, mut naive) = (0.0, 0.0);
    for _ in 0..rounds {
        for (i, bag) in ds.bags().iter().enumerate() {
            let subset = sample_instances(bag.len(), b, &mut rng);
            let fw = SubsetForward::for_kind(p, bag, &subset, kind)?;
            let fresh = fw.inner_f1(kind)?;
            let s = state.update(i, fresh)?;
            vrsp += (outer_f2(&s, kind)? - exact[i]).powi(2);
            naive += (outer_f2(&fresh, kind)? - exact[i]).powi(2);
        }
    }
    let n = (rounds * ds.len()) as f64;
    Ok(FrozenComparison { vrsp_mse: vrsp / n, naive_mse: naive / n })
}

/// Factorizations `(s, b)` of a fixed per-class budget `s·b`, with both
/// factors at least 2, ordered by increasing `s`.
pub fn budget_grid(budget: usize) -> Vec<(usize, usize)> {
    (2..=budget / 2).filter(|s| budget.is_multiple_of(*s)).map(|s| (s, budget / s)).collect()
}

/// First epoch whose training AUC reaches `target`, if any.
pub fn epochs_to_train_auc(rows: &[MetricsRow], target: f64) -> Option<usize> {
    rows.iter().find(|r| r.train_auc >= target).map(|r| r.epoch)
}
