//! Min-max AUC margin objective over pooled bag predictions `h`:
//!
//! ```text
//! F(w, a, b, alpha) = mean_{i in D+} (h_i - a)^2
//!                   + mean_{i in D-} (h_i - b)^2
//!                   + alpha · (c + mean_{D-} h - mean_{D+} h) - alpha^2 / 2
//! ```
//!
//! minimized over `(w, a, b)` and maximized over `alpha in [0, B_omega]`.

use crate::data::BagDataset;
use crate::error::{MidamError, Result};
use crate::model::{ModelParams, ParamGrad};
use crate::pooling::{outer_f2, pool_full, InnerValue, PoolKind, SubsetForward};
use crate::sampler::SampleBatch;
use crate::vrsp::PoolState;

/// BCE predictions are clamped to `[CE_CLAMP, 1 - CE_CLAMP]` before the log.
pub const CE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginConfig {
    pub margin: f64,
    pub omega_upper: f64,
}

impl Default for MarginConfig {
    fn default() -> Self {
        Self { margin: 0.1, omega_upper: 10.0 }
    }
}

impl MarginConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.omega_upper > 0.0) {
            return Err(MidamError::Argument(format!(
                "margin ({}) and omega upper bound ({}) must be positive",
                self.margin, self.omega_upper
            )));
        }
        Ok(())
    }

    /// Projection onto `[0, B_omega]`.
    pub fn project(&self, alpha: f64) -> f64 {
        alpha.clamp(0.0, self.omega_upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub f1_term: f64,
    pub f2_term: f64,
    pub f3_term: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradEstimate {
    pub g_w: ParamGrad,
    pub g_a: f64,
    pub g_b: f64,
    pub g_alpha: f64,
}

/// Full-bag predictions of every bag, indexed like the dataset.
pub fn predict_all(p: &ModelParams, ds: &BagDataset, kind: PoolKind) -> Result<Vec<f64>> {
    ds.bags().iter().map(|bag| pool_full(p, bag, kind)).collect()
}

pub fn eval_full(p: &ModelParams, ds: &BagDataset, kind: PoolKind, cfg: &MarginConfig) -> Result<ObjectiveValue> {
    ds.require_both_classes()?;
    let h = predict_all(p, ds, kind)?;
    let mean_over = |idx: &[usize], f: &dyn Fn(f64) -> f64| idx.iter().map(|&i| f(h[i])).sum::<f64>() / idx.len() as f64;
    let f1_term = mean_over(ds.pos_index(), &|v| (v - p.a).powi(2));
    let f2_term = mean_over(ds.neg_index(), &|v| (v - p.b).powi(2));
    let mean_pos = mean_over(ds.pos_index(), &|v| v);
    let mean_neg = mean_over(ds.neg_index(), &|v| v);
    let f3_term = p.alpha * (cfg.margin + mean_neg - mean_pos) - p.alpha * p.alpha / 2.0;
    Ok(ObjectiveValue { f1_term, f2_term, f3_term, total: f1_term + f2_term + f3_term })
}

/// Maximizer of `alpha·z - alpha^2/2` over `[0, B_omega]` with `z = c + mean_neg - mean_pos`.
pub fn optimal_alpha(mean_pos_h: f64, mean_neg_h: f64, cfg: &MarginConfig) -> f64 {
    cfg.project(cfg.margin + mean_neg_h - mean_pos_h)
}

/// Stochastic gradient estimate of the objective on a sampled batch.
///
/// Each sampled bag's prediction (and the `∇f2` factor) is taken at its
/// tracked estimate in `state` when the bag has been visited; otherwise, and
/// always when `state` is `None` or the pooling is not compositional, the
/// mini-batch pooled value of the sampled subset is used.
pub fn grad_estimators(
    p: &ModelParams,
    ds: &BagDataset,
    batch: &SampleBatch,
    state: Option<&PoolState>,
    kind: PoolKind,
    cfg: &MarginConfig,
) -> Result<GradEstimate> {
    let forwards = batch_forwards(p, ds, batch, kind)?;
    let mut tracked = Vec::with_capacity(forwards.len());
    for &i in &batch.bag_ids {
        let s = match state {
            Some(st) if kind.is_compositional() && st.visited(i)? => Some(*st.get(i)?),
            _ => None,
        };
        tracked.push(s);
    }
    assemble_estimate(p, &forwards, batch.n_pos, &tracked, kind, cfg)
}

pub(crate) fn batch_forwards<'a>(
    p: &ModelParams,
    ds: &'a BagDataset,
    batch: &SampleBatch,
    kind: PoolKind,
) -> Result<Vec<SubsetForward<'a>>> {
    batch
        .bag_ids
        .iter()
        .zip(&batch.per_bag_instances)
        .map(|(&i, subset)| {
            let bag = ds.bags().get(i).ok_or(MidamError::Index(i))?;
            SubsetForward::for_kind(p, bag, subset, kind)
        })
        .collect()
}

/// Core of [`grad_estimators`]: `forwards[..n_pos]` are positive bags.
pub(crate) fn assemble_estimate(
    p: &ModelParams,
    forwards: &[SubsetForward<'_>],
    n_pos: usize,
    tracked: &[Option<InnerValue>],
    kind: PoolKind,
    cfg: &MarginConfig,
) -> Result<GradEstimate> {
    let n_neg = forwards.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MidamError::Argument("batch needs at least one positive and one negative bag".into()));
    }
    let h: Vec<f64> = forwards
        .iter()
        .zip(tracked)
        .map(|(fw, s)| match s {
            Some(s) => outer_f2(s, kind),
            None => fw.pool(kind),
        })
        .collect::<Result<_>>()?;

    let (sp, sn) = (n_pos as f64, n_neg as f64);
    let mean_pos = h[..n_pos].iter().sum::<f64>() / sp;
    let mean_neg = h[n_pos..].iter().sum::<f64>() / sn;
    let g_a = h[..n_pos].iter().map(|v| -2.0 * (v - p.a)).sum::<f64>() / sp;
    let g_b = h[n_pos..].iter().map(|v| -2.0 * (v - p.b)).sum::<f64>() / sn;
    let g_alpha = cfg.margin + mean_neg - mean_pos;

    // G1 + G2 + G3 folded into one upstream scalar per bag
    let mut g_w = p.weights.zeros_like();
    for (k, (fw, s)) in forwards.iter().zip(tracked).enumerate() {
        let upstream = if k < n_pos {
            (2.0 * (h[k] - p.a) - p.alpha) / sp
        } else {
            (2.0 * (h[k] - p.b) + p.alpha) / sn
        };
        fw.vjp_into(p, kind, s.as_ref(), upstream, &mut g_w)?;
    }
    Ok(GradEstimate { g_w, g_a, g_b, g_alpha })
}

/// Mean binary cross-entropy of mini-batch pooled predictions against bag
/// labels, and its gradient. No tracked state is involved.
pub fn ce_loss_and_grad(p: &ModelParams, ds: &BagDataset, batch: &SampleBatch, kind: PoolKind) -> Result<(f64, ParamGrad)> {
    if batch.bag_ids.is_empty() {
        return Err(MidamError::Argument("empty batch".into()));
    }
    let forwards = batch_forwards(p, ds, batch, kind)?;
    let n = forwards.len() as f64;
    let mut loss = 0.0;
    let mut grad = p.weights.zeros_like();
    for (fw, &i) in forwards.iter().zip(&batch.bag_ids) {
        let y = if ds.bag(i).label { 1.0 } else { 0.0 };
        let h = fw.pool(kind)?;
        let hc = h.clamp(CE_CLAMP, 1.0 - CE_CLAMP);
        loss -= y * hc.ln() + (1.0 - y) * (1.0 - hc).ln();
        if hc == h {
            fw.vjp_into(p, kind, None, (h - y) / (h * (1.0 - h)) / n, &mut grad)?;
        }
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Bag, BagDataset};

    fn const_ds() -> BagDataset {
        let bags = (0..4).map(|i| Bag::new(i, i % 2 == 0, vec![vec![0.3, -0.1]; 3]).unwrap()).collect();
        BagDataset::new(bags).unwrap()
    }

    #[test]
    fn objective_of_constant_predictions() {
        let ds = const_ds();
        let mut p = ModelParams::init(2, 2, 0, 0.0).unwrap();
        let cfg = MarginConfig::default();
        let v = eval_full(&p, &ds, PoolKind::Mean, &cfg).unwrap();
        assert!((v.total - 2.0 * 0.25).abs() < 1e-15 && v.f3_term == 0.0);
        p.a = 0.5;
        p.b = 0.5;
        let v = eval_full(&p, &ds, PoolKind::Mean, &cfg).unwrap();
        assert_eq!(v.total, 0.0);
    }

    #[test]
    fn dual_closed_form() {
        let cfg = MarginConfig { margin: 0.1, omega_upper: 10.0 };
        assert_eq!(optimal_alpha(0.7, 0.3, &cfg), 0.0);
        assert!((optimal_alpha(0.4, 0.6, &cfg) - 0.3).abs() < 1e-15);
        assert_eq!(optimal_alpha(-20.0, 0.0, &cfg), 10.0);
    }

    #[test]
    fn single_class_batch_is_rejected() {
        let ds = const_ds();
        let p = ModelParams::init(2, 2, 0, 1.0).unwrap();
        let batch = SampleBatch { bag_ids: vec![0, 2], n_pos: 2, per_bag_instances: vec![vec![0], vec![0]] };
        let err = grad_estimators(&p, &ds, &batch, None, PoolKind::Mean, &MarginConfig::default()).unwrap_err();
        assert!(matches!(err, MidamError::Argument(_)));
    }

    #[test]
    fn ce_at_half_is_ln2() {
        let ds = const_ds();
        let p = ModelParams::init(2, 2, 0, 0.0).unwrap();
        let batch = SampleBatch::full(&ds);
        for kind in [PoolKind::Mean, PoolKind::Max, PoolKind::SmoothedMax { tau: 0.1 }, PoolKind::Attention] {
            let (loss, _) = ce_loss_and_grad(&p, &ds, &batch, kind).unwrap();
            assert!((loss - std::f64::consts::LN_2).abs() < 1e-12, "{kind}: {loss}");
        }
    }

    #[test]
    fn ce_near_zero_when_predictions_match_labels() {
        let ds = const_ds();
        let mut p = ModelParams::init(2, 2, 0, 0.0).unwrap();
        p.weights.c0 = 40.0;
        let pos = SampleBatch { bag_ids: vec![0, 2], n_pos: 2, per_bag_instances: vec![vec![0, 1, 2]; 2] };
        let (loss, grad) = ce_loss_and_grad(&p, &ds, &pos, PoolKind::Mean).unwrap();
        assert!(loss < 1e-6, "{loss}");
        assert!(grad.iter().all(|&g| g == 0.0));
    }
}
