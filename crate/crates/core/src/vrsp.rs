//! Variance-reduced stochastic pooling: one moving-average estimate of the
//! inner function per bag, refreshed only when the bag is sampled.
//!
//! ```text
//! s_i <- (1 - gamma0) · s_i + gamma0 · f1(w; B_i)
//! ```
//!
//! Slots start at zero. The first time a bag is touched its slot is set to
//! the fresh value outright, so the attention denominator is never blended
//! with the zero initialization.

use crate::data::BagDataset;
use crate::error::{MidamError, Result};
use crate::model::ModelParams;
use crate::pooling::{inner_f1, InnerValue, PoolKind};

#[derive(Debug, Clone, PartialEq)]
pub struct PoolState {
    kind: PoolKind,
    gamma0: f64,
    slots: Vec<InnerValue>,
    visited: Vec<bool>,
}

/// Class-wise mean squared deviation of the tracked estimates from the
/// full-bag inner function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorErrorReport {
    pub upsilon_pos: f64,
    pub upsilon_neg: f64,
}

impl EstimatorErrorReport {
    pub fn total(&self) -> f64 {
        self.upsilon_pos + self.upsilon_neg
    }
}

impl PoolState {
    pub fn new(n_bags: usize, kind: PoolKind, gamma0: f64) -> Result<Self> {
        check_gamma(gamma0)?;
        let zero = InnerValue::zero_for(kind)?;
        Ok(Self { kind, gamma0, slots: vec![zero; n_bags], visited: vec![false; n_bags] })
    }

    pub fn init(ds: &BagDataset, kind: PoolKind, gamma0: f64) -> Result<Self> {
        Self::new(ds.len(), kind, gamma0)
    }

    /// Rebuilds a state from stored slots, e.g. when restoring a checkpoint.
    pub fn from_parts(kind: PoolKind, gamma0: f64, slots: Vec<InnerValue>, visited: Vec<bool>) -> Result<Self> {
        check_gamma(gamma0)?;
        if slots.len() != visited.len() {
            return Err(MidamError::Shape { expected: slots.len(), got: visited.len() });
        }
        let zero = InnerValue::zero_for(kind)?;
        if slots.iter().any(|s| s.components().len() != zero.components().len()) {
            return Err(MidamError::Argument(format!("stored slots do not match {kind} pooling")));
        }
        Ok(Self { kind, gamma0, slots, visited })
    }

    pub fn kind(&self) -> PoolKind {
        self.kind
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    /// Used by the training schedule when it decays the moving-average weight.
    pub fn set_gamma0(&mut self, gamma0: f64) -> Result<()> {
        check_gamma(gamma0)?;
        self.gamma0 = gamma0;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn get(&self, bag_id: usize) -> Result<&InnerValue> {
        self.slots.get(bag_id).ok_or(MidamError::Index(bag_id))
    }

    pub fn visited(&self, bag_id: usize) -> Result<bool> {
        self.visited.get(bag_id).copied().ok_or(MidamError::Index(bag_id))
    }

    pub fn slots(&self) -> &[InnerValue] {
        &self.slots
    }

    pub fn update(&mut self, bag_id: usize, fresh: InnerValue) -> Result<InnerValue> {
        let slot = self.slots.get_mut(bag_id).ok_or(MidamError::Index(bag_id))?;
        if !fresh.is_finite() {
            return Err(MidamError::Numeric(format!("non-finite inner estimate for bag {bag_id}")));
        }
        *slot = if self.visited[bag_id] { slot.blend(fresh, self.gamma0)? } else { slot.blend(fresh, 1.0)? };
        self.visited[bag_id] = true;
        Ok(*slot)
    }

    /// Full-dataset pass; diagnostic only.
    pub fn error_report(&self, p: &ModelParams, ds: &BagDataset) -> Result<EstimatorErrorReport> {
        if ds.len() != self.slots.len() {
            return Err(MidamError::Shape { expected: self.slots.len(), got: ds.len() });
        }
        let class_mean = |index: &[usize]| -> Result<f64> {
            if index.is_empty() {
                return Ok(0.0);
            }
            let mut total = 0.0;
            for &i in index {
                let bag = ds.bag(i);
                let exact = inner_f1(p, bag, &bag.all_indices(), self.kind)?;
                total += self.slots[i].sq_dist(&exact);
            }
            Ok(total / index.len() as f64)
        };
        Ok(EstimatorErrorReport { upsilon_pos: class_mean(ds.pos_index())?, upsilon_neg: class_mean(ds.neg_index())? })
    }
}

fn check_gamma(gamma0: f64) -> Result<()> {
    if gamma0 > 0.0 && gamma0 <= 1.0 {
        Ok(())
    } else {
        Err(MidamError::Argument(format!("gamma0 must lie in (0, 1], got {gamma0}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::pooling::{outer_f2, pool_full};

    fn ds() -> BagDataset {
        generate_synthetic(&SyntheticSpec {
            n_pos: 3,
            n_neg: 4,
            bag_size: 6,
            dim: 3,
            witness_shift: 1.5,
            witness_count: 2,
            seed: 21,
        })
        .unwrap()
    }

    #[test]
    fn fresh_state_is_zero() {
        let ds = ds();
        let s = PoolState::init(&ds, PoolKind::Attention, 0.9).unwrap();
        assert_eq!(s.len(), ds.len());
        for i in 0..ds.len() {
            assert_eq!(*s.get(i).unwrap(), InnerValue::Pair(0.0, 0.0));
            assert!(!s.visited(i).unwrap());
        }
        let s = PoolState::init(&ds, PoolKind::SmoothedMax { tau: 0.1 }, 1.0).unwrap();
        assert_eq!(*s.get(0).unwrap(), InnerValue::Scalar(0.0));
    }

    #[test]
    fn gamma_out_of_range() {
        let ds = ds();
        for g in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(PoolState::init(&ds, PoolKind::Attention, g).is_err());
        }
        assert!(PoolState::init(&ds, PoolKind::Mean, 0.5).is_err());
    }

    #[test]
    fn moving_average_arithmetic() {
        let mut s = PoolState::new(2, PoolKind::SmoothedMax { tau: 1.0 }, 0.5).unwrap();
        assert_eq!(s.update(0, InnerValue::Scalar(2.0)).unwrap(), InnerValue::Scalar(2.0));
        assert_eq!(s.update(0, InnerValue::Scalar(4.0)).unwrap(), InnerValue::Scalar(3.0));
        assert!(matches!(s.update(5, InnerValue::Scalar(1.0)), Err(MidamError::Index(5))));
        assert!(s.update(1, InnerValue::Scalar(f64::INFINITY)).is_err());
    }

    #[test]
    fn gamma_one_forgets_history() {
        let mut s = PoolState::new(1, PoolKind::Attention, 1.0).unwrap();
        s.update(0, InnerValue::Pair(5.0, 2.0)).unwrap();
        assert_eq!(s.update(0, InnerValue::Pair(-1.0, 0.5)).unwrap(), InnerValue::Pair(-1.0, 0.5));
    }

    #[test]
    fn full_bag_update_reproduces_pooling() {
        let ds = ds();
        let p = ModelParams::init(3, 4, 2, 1.0).unwrap();
        for kind in [PoolKind::SmoothedMax { tau: 0.1 }, PoolKind::Attention] {
            let mut s = PoolState::init(&ds, kind, 1.0).unwrap();
            for (i, bag) in ds.bags().iter().enumerate() {
                let fresh = inner_f1(&p, bag, &bag.all_indices(), kind).unwrap();
                let si = s.update(i, fresh).unwrap();
                let h = pool_full(&p, bag, kind).unwrap();
                assert!((outer_f2(&si, kind).unwrap() - h).abs() <= 1e-12);
            }
            let r = s.error_report(&p, &ds).unwrap();
            assert_eq!((r.upsilon_pos, r.upsilon_neg), (0.0, 0.0));
        }
    }

    #[test]
    fn fresh_state_error_on_zero_model() {
        let ds = ds();
        let p = ModelParams::init(3, 4, 0, 0.0).unwrap();
        let s = PoolState::init(&ds, PoolKind::SmoothedMax { tau: 1.0 }, 0.5).unwrap();
        let r = s.error_report(&p, &ds).unwrap();
        let e = std::f64::consts::E;
        assert!((r.upsilon_pos - e).abs() < 1e-12 && (r.upsilon_neg - e).abs() < 1e-12);
    }
}
