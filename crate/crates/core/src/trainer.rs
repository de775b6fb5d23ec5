//! Training loops: the variance-reduced min-max method, the naive
//! mini-batch pooling baseline, and the cross-entropy baseline.
//!
//! One MIDAM step:
//!
//! 1. sample `s_pos` positive and `s_neg` negative bags, and up to `b`
//!    instances from each;
//! 2. compute the inner function on each sampled subset and fold it into
//!    the bag's tracked estimate;
//! 3. assemble the gradient estimate with predictions and `∇f2` taken at the
//!    tracked estimates;
//! 4. momentum (or Adam-style) descent on `(w, a, b)`;
//! 5. projected ascent `alpha <- clip(alpha + eta'·(g_alpha - alpha))`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::data::BagDataset;
use crate::error::{MidamError, Result};
use crate::eval::{score_dataset, BagScores, MetricsRow};
use crate::model::{default_att_dim, ModelParams, ParamGrad};
use crate::objective::{assemble_estimate, batch_forwards, ce_loss_and_grad, GradEstimate, MarginConfig, CE_CLAMP};
use crate::optim::{MomentumState, OptimizerKind, PrimalStep};
use crate::pooling::{PoolKind, DEFAULT_TAU};
use crate::sampler::BagSampler;
use crate::vrsp::PoolState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Midam,
    DamMb,
    Ce,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Midam => "midam",
            Self::DamMb => "dam_mb",
            Self::Ce => "ce",
        })
    }
}

impl FromStr for Method {
    type Err = MidamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "midam" => Ok(Self::Midam),
            "dam_mb" | "dam" => Ok(Self::DamMb),
            "ce" => Ok(Self::Ce),
            other => Err(MidamError::Argument(format!("unknown method {other:?}"))),
        }
    }
}

/// Instance batch size meaning "every instance of the bag".
pub const FULL_BAG: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub kind: PoolKind,
    pub s_pos: usize,
    pub s_neg: usize,
    pub b: usize,
    pub eta: f64,
    pub eta_prime: f64,
    pub beta1: f64,
    pub gamma0: f64,
    pub epochs: usize,
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    pub mom_gamma_decay_factor: f64,
    pub weight_decay: f64,
    pub margin_cfg: MarginConfig,
    pub optimizer: OptimizerKind,
    pub adam_eps: f64,
    pub adam_beta2: f64,
    pub seed: u64,
    pub init_scale: f64,
    /// Attention width; `None` picks `max(4, ceil(d/2))`.
    pub att_dim: Option<usize>,
    /// Run the estimator-error diagnostic every this many epochs (0 = never).
    pub diag_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Midam,
            kind: PoolKind::SmoothedMax { tau: DEFAULT_TAU },
            s_pos: 8,
            s_neg: 8,
            b: 4,
            eta: 0.1,
            eta_prime: 1.0,
            beta1: 0.1,
            gamma0: 0.9,
            epochs: 100,
            lr_decay_epochs: vec![50, 75],
            lr_decay_factor: 10.0,
            mom_gamma_decay_factor: 2.0,
            weight_decay: 1e-4,
            margin_cfg: MarginConfig::default(),
            optimizer: OptimizerKind::Momentum,
            adam_eps: 1e-8,
            adam_beta2: 0.999,
            seed: 0,
            init_scale: 1.0,
            att_dim: None,
            diag_every: 0,
        }
    }
}

impl TrainConfig {
    /// Defaults for a method: the baselines pool over whole bags, and the
    /// cross-entropy baseline uses Adam.
    pub fn for_method(method: Method) -> Self {
        let base = Self { method, ..Self::default() };
        match method {
            Method::Midam => base,
            Method::DamMb => Self { b: FULL_BAG, ..base },
            Method::Ce => Self { b: FULL_BAG, optimizer: OptimizerKind::Adam, beta1: 0.9, eta: 1e-3, ..base },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MidamError::Config(msg));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if self.method != Method::Ce && self.optimizer == OptimizerKind::Momentum && self.eta >= 0.5 {
            return bad(format!("eta must be below 0.5 for the a/b updates, got {}", self.eta));
        }
        if !(self.gamma0 > 0.0 && self.gamma0 <= 1.0) {
            return bad(format!("gamma0 must lie in (0, 1], got {}", self.gamma0));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad(format!("beta1 must lie in [0, 1), got {}", self.beta1));
        }
        if !(0.0..1.0).contains(&self.adam_beta2) || self.adam_eps <= 0.0 {
            return bad("adam_beta2 must lie in [0, 1) and adam_eps must be positive".into());
        }
        if self.eta_prime.is_nan() || self.eta_prime <= 0.0 {
            return bad(format!("eta_prime must be positive, got {}", self.eta_prime));
        }
        if self.s_pos == 0 || self.s_neg == 0 || self.b == 0 {
            return bad("s_pos, s_neg and b must be at least 1".into());
        }
        if self.lr_decay_factor < 1.0 || self.mom_gamma_decay_factor < 1.0 {
            return bad("decay factors must be at least 1".into());
        }
        if self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative".into());
        }
        self.margin_cfg.validate()
    }

    fn uses_vrsp(&self) -> bool {
        self.method == Method::Midam && self.kind.is_compositional()
    }

    pub fn steps_per_epoch(&self, ds: &BagDataset) -> usize {
        let sp = ds.n_pos().div_ceil(self.s_pos.min(ds.n_pos()).max(1));
        let sn = ds.n_neg().div_ceil(self.s_neg.min(ds.n_neg()).max(1));
        sp.max(sn)
    }

    pub fn init_params(&self, dim: usize) -> Result<ModelParams> {
        ModelParams::init(dim, self.att_dim.unwrap_or_else(|| default_att_dim(dim)), self.seed, self.init_scale)
    }
}

/// Step sizes that move with the epoch schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub eta: f64,
    pub eta_prime: f64,
    /// `1 - beta1`
    pub one_minus_beta1: f64,
    pub gamma0: f64,
}

impl Schedule {
    pub fn start(cfg: &TrainConfig) -> Self {
        Self { eta: cfg.eta, eta_prime: cfg.eta_prime, one_minus_beta1: 1.0 - cfg.beta1, gamma0: cfg.gamma0 }
    }

    /// Applied after `epoch` (1-based) completes.
    pub fn end_of_epoch(&mut self, epoch: usize, cfg: &TrainConfig) {
        if !cfg.lr_decay_epochs.contains(&epoch) {
            return;
        }
        self.eta /= cfg.lr_decay_factor;
        if cfg.method != Method::Ce {
            self.eta_prime /= cfg.mom_gamma_decay_factor;
            self.one_minus_beta1 /= cfg.mom_gamma_decay_factor;
            self.gamma0 /= cfg.mom_gamma_decay_factor;
        }
    }

    pub fn beta1(&self) -> f64 {
        1.0 - self.one_minus_beta1
    }
}

/// Everything a training loop mutates.
#[derive(Debug, Clone)]
pub struct TrainerState {
    pub params: ModelParams,
    pub pool_state: Option<PoolState>,
    pub momentum: MomentumState,
    pub sampler: BagSampler,
    pub schedule: Schedule,
    pub steps: u64,
}

impl TrainerState {
    pub fn new(ds: &BagDataset, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        ds.require_both_classes()?;
        let params = cfg.init_params(ds.dim())?;
        Self::with_params(ds, cfg, params)
    }

    pub fn with_params(ds: &BagDataset, cfg: &TrainConfig, params: ModelParams) -> Result<Self> {
        if params.dim() != ds.dim() {
            return Err(MidamError::Shape { expected: ds.dim(), got: params.dim() });
        }
        let pool_state = if cfg.uses_vrsp() { Some(PoolState::init(ds, cfg.kind, cfg.gamma0)?) } else { None };
        let momentum = MomentumState::new(&params, cfg.optimizer);
        // the sampler stream is kept apart from the weight-init stream
        let sampler = BagSampler::new(ds, cfg.seed ^ 0x5eed_5a3b_1e00_0001);
        Ok(Self { params, pool_state, momentum, sampler, schedule: Schedule::start(cfg), steps: 0 })
    }

    fn primal_step(&self, cfg: &TrainConfig) -> PrimalStep {
        PrimalStep { lr: self.schedule.eta, beta1: self.schedule.beta1(), beta2: cfg.adam_beta2, eps: cfg.adam_eps }
    }
}

/// Diagnostics of the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub estimate: GradEstimate,
    pub loss: Option<f64>,
}

/// One step of the min-max method (`Midam` with VRSP, or `DamMb` with naive
/// mini-batch pooling; mean/max pooling always uses the naive path).
pub fn midam_step(st: &mut TrainerState, ds: &BagDataset, cfg: &TrainConfig) -> Result<StepReport> {
    let batch = st.sampler.sample_batch(ds, cfg.s_pos, cfg.s_neg, cfg.b)?;
    let forwards = batch_forwards(&st.params, ds, &batch, cfg.kind)?;

    let mut tracked = vec![None; forwards.len()];
    if let Some(pool_state) = st.pool_state.as_mut() {
        pool_state.set_gamma0(st.schedule.gamma0)?;
        for (k, (fw, &i)) in forwards.iter().zip(&batch.bag_ids).enumerate() {
            let fresh = fw.inner_f1(cfg.kind)?;
            tracked[k] = Some(pool_state.update(i, fresh)?);
        }
    }

    let mut estimate = assemble_estimate(&st.params, &forwards, batch.n_pos, &tracked, cfg.kind, &cfg.margin_cfg)?;
    drop(forwards);
    let mut g_w = estimate.g_w.clone();
    if cfg.weight_decay > 0.0 {
        g_w.add_scaled(cfg.weight_decay, &st.params.weights);
    }
    check_finite("gradient", &g_w, &[("g_a", estimate.g_a), ("g_b", estimate.g_b), ("g_alpha", estimate.g_alpha)])?;

    let hp = st.primal_step(cfg);
    let alpha = st.params.alpha;
    st.momentum.apply(&mut st.params, &g_w, estimate.g_a, estimate.g_b, &hp);
    st.params.alpha = cfg.margin_cfg.project(alpha + st.schedule.eta_prime * (estimate.g_alpha - alpha));
    check_params(&st.params)?;
    st.steps += 1;
    estimate.g_w = g_w;
    Ok(StepReport { estimate, loss: None })
}

/// The naive mini-batch baseline: identical to [`midam_step`] with no tracked state.
pub fn baseline_dam_mb_step(st: &mut TrainerState, ds: &BagDataset, cfg: &TrainConfig) -> Result<StepReport> {
    let saved = st.pool_state.take();
    let out = midam_step(st, ds, cfg);
    st.pool_state = saved;
    out
}

/// One cross-entropy step on mini-batch pooled predictions.
pub fn ce_step(st: &mut TrainerState, ds: &BagDataset, cfg: &TrainConfig) -> Result<StepReport> {
    let batch = st.sampler.sample_batch(ds, cfg.s_pos, cfg.s_neg, cfg.b)?;
    let (loss, mut g_w) = ce_loss_and_grad(&st.params, ds, &batch, cfg.kind)?;
    if cfg.weight_decay > 0.0 {
        g_w.add_scaled(cfg.weight_decay, &st.params.weights);
    }
    check_finite("gradient", &g_w, &[("loss", loss)])?;
    let hp = st.primal_step(cfg);
    st.momentum.apply(&mut st.params, &g_w, 0.0, 0.0, &hp);
    check_params(&st.params)?;
    st.steps += 1;
    let estimate = GradEstimate { g_w, g_a: 0.0, g_b: 0.0, g_alpha: 0.0 };
    Ok(StepReport { estimate, loss: Some(loss) })
}

pub fn step(st: &mut TrainerState, ds: &BagDataset, cfg: &TrainConfig) -> Result<StepReport> {
    match cfg.method {
        Method::Midam => midam_step(st, ds, cfg),
        Method::DamMb => baseline_dam_mb_step(st, ds, cfg),
        Method::Ce => ce_step(st, ds, cfg),
    }
}

fn check_finite(what: &str, g: &ParamGrad, scalars: &[(&str, f64)]) -> Result<()> {
    if let Some(name) = g.first_non_finite() {
        return Err(MidamError::Numeric(format!("non-finite {what} in tensor {name}")));
    }
    if let Some((name, _)) = scalars.iter().find(|(_, v)| !v.is_finite()) {
        return Err(MidamError::Numeric(format!("non-finite {what} component {name}")));
    }
    Ok(())
}

fn check_params(p: &ModelParams) -> Result<()> {
    if let Some(name) = p.weights.first_non_finite() {
        return Err(MidamError::Numeric(format!("non-finite parameter tensor {name} after update")));
    }
    for (name, v) in [("a", p.a), ("b", p.b), ("alpha", p.alpha)] {
        if !v.is_finite() {
            return Err(MidamError::Numeric(format!("non-finite parameter {name} after update")));
        }
    }
    Ok(())
}

/// Training-set objective used in the metrics stream: the min-max objective
/// for the AUC methods, mean BCE for cross-entropy. Computed from full-bag
/// predictions.
pub fn training_objective(p: &ModelParams, train: &BagScores, cfg: &TrainConfig) -> f64 {
    match cfg.method {
        Method::Ce => {
            let bce = |h: f64, y: f64| {
                let h = h.clamp(CE_CLAMP, 1.0 - CE_CLAMP);
                -(y * h.ln() + (1.0 - y) * (1.0 - h).ln())
            };
            let total: f64 = train.pos.iter().map(|&h| bce(h, 1.0)).chain(train.neg.iter().map(|&h| bce(h, 0.0))).sum();
            total / (train.pos.len() + train.neg.len()) as f64
        }
        _ => {
            let f1 = train.pos.iter().map(|h| (h - p.a).powi(2)).sum::<f64>() / train.pos.len() as f64;
            let f2 = train.neg.iter().map(|h| (h - p.b).powi(2)).sum::<f64>() / train.neg.len() as f64;
            let z = cfg.margin_cfg.margin + train.mean_neg() - train.mean_pos();
            f1 + f2 + p.alpha * z - p.alpha * p.alpha / 2.0
        }
    }
}

/// Per-epoch hook: sees the metrics row and the live state after the epoch.
pub struct EpochView<'a> {
    pub row: &'a MetricsRow,
    pub state: &'a TrainerState,
    pub is_best: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the epoch with the highest validation AUC (earliest on ties).
    pub best: ModelParams,
    pub best_epoch: usize,
    pub metrics: Vec<MetricsRow>,
    pub final_state: TrainerState,
}

pub fn train(train_ds: &BagDataset, val: &BagDataset, test: &BagDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_observer(train_ds, val, test, cfg, |_| Ok(()))
}

pub fn train_with_observer(
    train_ds: &BagDataset,
    val: &BagDataset,
    test: &BagDataset,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochView<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    let st = TrainerState::new(train_ds, cfg)?;
    train_from(st, train_ds, val, test, cfg, &mut observer)
}

pub fn train_from(
    mut st: TrainerState,
    train_ds: &BagDataset,
    val: &BagDataset,
    test: &BagDataset,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochView<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    val.require_both_classes()?;
    test.require_both_classes()?;
    let started = Instant::now();
    let steps = cfg.steps_per_epoch(train_ds);
    let mut best = st.params.clone();
    let mut best_epoch = 0;
    let mut best_val = f64::NEG_INFINITY;
    let mut metrics = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let lr = st.schedule.eta;
        for _ in 0..steps {
            step(&mut st, train_ds, cfg)?;
        }
        let train_scores = score_dataset(&st.params, train_ds, cfg.kind)?;
        let val_auc = score_dataset(&st.params, val, cfg.kind)?.auc()?;
        let test_auc = score_dataset(&st.params, test, cfg.kind)?.auc()?;
        let diag = match (&st.pool_state, cfg.diag_every) {
            (Some(ps), k) if k > 0 && epoch % k == 0 => Some(ps.error_report(&st.params, train_ds)?),
            _ => None,
        };
        let row = MetricsRow {
            epoch,
            train_auc: train_scores.auc()?,
            val_auc,
            test_auc,
            objective: training_objective(&st.params, &train_scores, cfg),
            upsilon_pos: diag.map(|d| d.upsilon_pos),
            upsilon_neg: diag.map(|d| d.upsilon_neg),
            alpha: st.params.alpha,
            lr,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        let is_best = val_auc > best_val;
        if is_best {
            best_val = val_auc;
            best = st.params.clone();
            best_epoch = epoch;
        }
        observer(&EpochView { row: &row, state: &st, is_best })?;
        metrics.push(row);
        st.schedule.end_of_epoch(epoch, cfg);
    }
    Ok(TrainOutcome { best, best_epoch, metrics, final_state: st })
}
