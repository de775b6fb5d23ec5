//! Bag-level pooling of instance outputs.
//!
//! Smoothed-max and attention pooling are written as `h = f2(f1(w; subset))`
//! where `f1` is a mean over instances:
//!
//! | kind         | `f1`                                   | `f2(s)`          |
//! |--------------|----------------------------------------|------------------|
//! | smoothed-max | `mean exp(phi / tau)`                  | `tau · ln s`     |
//! | attention    | `(mean exp(g)·delta, mean exp(g))`     | `sigmoid(s1/s2)` |
//!
//! Mean and max pooling have no such split and are only evaluated directly.
//! All reductions run in ascending instance-index order.

use std::fmt;
use std::str::FromStr;

use crate::data::Bag;
use crate::error::{MidamError, Result};
use crate::model::{accumulate_vjp, att_pair_cotangent, forward_unchecked, sigmoid, InstanceForward, ModelParams, ParamGrad};

/// Floor applied to the attention denominator in `f2`.
pub const ATT_DEN_FLOOR: f64 = 1e-12;

pub const DEFAULT_TAU: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PoolKind {
    Mean,
    Max,
    SmoothedMax { tau: f64 },
    Attention,
}

impl PoolKind {
    pub fn smoothed_max(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau.is_finite() {
            Ok(Self::SmoothedMax { tau })
        } else {
            Err(MidamError::Argument(format!("smoothed-max temperature must be positive, got {tau}")))
        }
    }

    /// Whether the kind has an `f2 ∘ f1` split that a running estimator can track.
    pub fn is_compositional(&self) -> bool {
        matches!(self, Self::SmoothedMax { .. } | Self::Attention)
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::Max => "max",
            Self::SmoothedMax { .. } => "smx",
            Self::Attention => "att",
        }
    }
}

/// Inverse of the `FromStr` impl; a non-default temperature is spelled out.
impl fmt::Display for PoolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SmoothedMax { tau } if *tau != DEFAULT_TAU => write!(f, "smx:{tau}"),
            k => f.write_str(k.short_name()),
        }
    }
}

/// Parses `mean`, `max`, `att`, `smx` (default temperature) or `smx:<tau>`.
impl FromStr for PoolKind {
    type Err = MidamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            "att" | "attention" => Ok(Self::Attention),
            "smx" | "smoothed_max" => Ok(Self::SmoothedMax { tau: DEFAULT_TAU }),
            other => match other.strip_prefix("smx:") {
                Some(t) => Self::smoothed_max(
                    t.parse().map_err(|_| MidamError::Argument(format!("bad temperature {t:?}")))?,
                ),
                None => Err(MidamError::Argument(format!("unknown pooling {other:?}"))),
            },
        }
    }
}

/// Value of the inner function: a scalar for smoothed-max, a pair for attention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerValue {
    Scalar(f64),
    Pair(f64, f64),
}

impl InnerValue {
    pub fn zero_for(kind: PoolKind) -> Result<Self> {
        match kind {
            PoolKind::SmoothedMax { .. } => Ok(Self::Scalar(0.0)),
            PoolKind::Attention => Ok(Self::Pair(0.0, 0.0)),
            k => Err(MidamError::Argument(format!("{k} pooling has no inner function"))),
        }
    }

    /// `(1 - gamma)·self + gamma·fresh`
    pub fn blend(self, fresh: Self, gamma: f64) -> Result<Self> {
        match (self, fresh) {
            (Self::Scalar(s), Self::Scalar(f)) => Ok(Self::Scalar((1.0 - gamma) * s + gamma * f)),
            (Self::Pair(s1, s2), Self::Pair(f1, f2)) => {
                Ok(Self::Pair((1.0 - gamma) * s1 + gamma * f1, (1.0 - gamma) * s2 + gamma * f2))
            }
            _ => Err(MidamError::Argument("mixed scalar and pair inner values".into())),
        }
    }

    pub fn sq_dist(&self, other: &Self) -> f64 {
        match (self, other) {
            (Self::Scalar(a), Self::Scalar(b)) => (a - b).powi(2),
            (Self::Pair(a1, a2), Self::Pair(b1, b2)) => (a1 - b1).powi(2) + (a2 - b2).powi(2),
            _ => f64::NAN,
        }
    }

    pub fn sq_norm(&self) -> f64 {
        match *self {
            Self::Scalar(a) => a * a,
            Self::Pair(a, b) => a * a + b * b,
        }
    }

    pub fn is_finite(&self) -> bool {
        match *self {
            Self::Scalar(a) => a.is_finite(),
            Self::Pair(a, b) => a.is_finite() && b.is_finite(),
        }
    }

    pub fn components(&self) -> Vec<f64> {
        match *self {
            Self::Scalar(a) => vec![a],
            Self::Pair(a, b) => vec![a, b],
        }
    }
}

/// Forward results for an instance subset of one bag, in ascending index order.
#[derive(Debug, Clone)]
pub struct SubsetForward<'a> {
    bag: &'a Bag,
    indices: Vec<usize>,
    outputs: Vec<InstanceForward>,
}

impl<'a> SubsetForward<'a> {
    pub fn new(p: &ModelParams, bag: &'a Bag, subset: &[usize]) -> Result<Self> {
        Self::build(p, bag, subset, true)
    }

    /// Like [`SubsetForward::new`], skipping attention logits unless `kind` needs them.
    pub fn for_kind(p: &ModelParams, bag: &'a Bag, subset: &[usize], kind: PoolKind) -> Result<Self> {
        Self::build(p, bag, subset, kind == PoolKind::Attention)
    }

    fn build(p: &ModelParams, bag: &'a Bag, subset: &[usize], attention: bool) -> Result<Self> {
        if subset.is_empty() {
            return Err(MidamError::Argument(format!("empty instance subset for bag {}", bag.id)));
        }
        if bag.dim() != p.dim() {
            return Err(MidamError::Shape { expected: p.dim(), got: bag.dim() });
        }
        let mut indices = subset.to_vec();
        indices.sort_unstable();
        if let Some(&j) = indices.iter().find(|&&j| j >= bag.len()) {
            return Err(MidamError::Index(j));
        }
        let outputs = indices.iter().map(|&j| forward_unchecked(&p.weights, bag.instance(j), attention)).collect();
        Ok(Self { bag, indices, outputs })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn outputs(&self) -> &[InstanceForward] {
        &self.outputs
    }

    pub fn inner_f1(&self, kind: PoolKind) -> Result<InnerValue> {
        let n = self.len() as f64;
        match kind {
            PoolKind::SmoothedMax { tau } => {
                let s = self.outputs.iter().map(|f| (f.phi / tau).exp()).sum::<f64>() / n;
                Ok(InnerValue::Scalar(s))
            }
            PoolKind::Attention => {
                let (num, den) = self.outputs.iter().fold((0.0, 0.0), |(num, den), f| {
                    let eg = f.exp_g();
                    (num + eg * f.delta, den + eg)
                });
                Ok(InnerValue::Pair(num / n, den / n))
            }
            k => Err(MidamError::Argument(format!("{k} pooling has no inner function"))),
        }
    }

    pub fn pool(&self, kind: PoolKind) -> Result<f64> {
        match kind {
            PoolKind::Mean => Ok(self.outputs.iter().map(|f| f.phi).sum::<f64>() / self.len() as f64),
            PoolKind::Max => Ok(self.outputs[self.argmax()].phi),
            k => outer_f2(&self.inner_f1(k)?, k),
        }
    }

    /// Lowest-index instance attaining the maximum score.
    fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, f) in self.outputs.iter().enumerate().skip(1) {
            if f.phi > self.outputs[best].phi {
                best = k;
            }
        }
        best
    }

    /// Adds `upstream · ∇f1(subset) · ∇f2(s_eval)` into `grad`. With
    /// `s_eval = None` the subset's own `f1` is used, which makes this the
    /// exact gradient of `pool(kind)` over the subset.
    pub fn vjp_into(
        &self,
        p: &ModelParams,
        kind: PoolKind,
        s_eval: Option<&InnerValue>,
        upstream: f64,
        grad: &mut ParamGrad,
    ) -> Result<()> {
        if !upstream.is_finite() {
            return Err(MidamError::Numeric(format!("non-finite upstream gradient {upstream}")));
        }
        if upstream == 0.0 {
            return Ok(());
        }
        let n = self.len() as f64;
        let own;
        let s_eval = match (kind.is_compositional(), s_eval) {
            (true, Some(s)) => Some(s),
            (true, None) => {
                own = self.inner_f1(kind)?;
                Some(&own)
            }
            (false, _) => None,
        };
        match (kind, s_eval) {
            (PoolKind::Mean, _) => {
                for (f, &j) in self.outputs.iter().zip(&self.indices) {
                    let d_delta = upstream / n * f.phi * (1.0 - f.phi);
                    accumulate_vjp(&p.weights, self.bag.instance(j), f, d_delta, 0.0, grad);
                }
            }
            (PoolKind::Max, _) => {
                let k = self.argmax();
                let f = &self.outputs[k];
                accumulate_vjp(&p.weights, self.bag.instance(self.indices[k]), f, upstream * f.phi * (1.0 - f.phi), 0.0, grad);
            }
            (PoolKind::SmoothedMax { tau }, Some(&InnerValue::Scalar(s))) => {
                check_smx_domain(s)?;
                // d/dphi [tau ln s] through f1 = exp(phi/tau) / (s n)
                for (f, &j) in self.outputs.iter().zip(&self.indices) {
                    let d_phi = upstream * (f.phi / tau).exp() / (s * n);
                    accumulate_vjp(&p.weights, self.bag.instance(j), f, d_phi * f.phi * (1.0 - f.phi), 0.0, grad);
                }
            }
            (PoolKind::Attention, Some(&InnerValue::Pair(s1, s2))) => {
                let den = att_denominator(s2)?;
                let h = sigmoid(s1 / den);
                let d_ratio = upstream * h * (1.0 - h);
                let up_num = d_ratio / den / n;
                let up_den = -d_ratio * s1 / (den * den) / n;
                for (f, &j) in self.outputs.iter().zip(&self.indices) {
                    let (d_delta, d_g) = att_pair_cotangent(f, up_num, up_den);
                    accumulate_vjp(&p.weights, self.bag.instance(j), f, d_delta, d_g, grad);
                }
            }
            (k, _) => {
                return Err(MidamError::Argument(format!("inner value does not match {k} pooling")));
            }
        }
        Ok(())
    }
}

fn check_smx_domain(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(MidamError::Numeric(format!("smoothed-max inner value s = {s} outside (0, inf)")))
    }
}

fn att_denominator(s2: f64) -> Result<f64> {
    if s2.is_finite() && s2 >= 0.0 {
        Ok(s2.max(ATT_DEN_FLOOR))
    } else {
        Err(MidamError::Numeric(format!("attention denominator s2 = {s2} is negative or non-finite")))
    }
}

pub fn inner_f1(p: &ModelParams, bag: &Bag, subset: &[usize], kind: PoolKind) -> Result<InnerValue> {
    if !kind.is_compositional() {
        return Err(MidamError::Argument(format!("{kind} pooling has no inner function")));
    }
    SubsetForward::for_kind(p, bag, subset, kind)?.inner_f1(kind)
}

pub fn outer_f2(s: &InnerValue, kind: PoolKind) -> Result<f64> {
    match (kind, *s) {
        (PoolKind::SmoothedMax { tau }, InnerValue::Scalar(v)) => {
            check_smx_domain(v)?;
            Ok(tau * v.ln())
        }
        (PoolKind::Attention, InnerValue::Pair(s1, s2)) => {
            if !s1.is_finite() {
                return Err(MidamError::Numeric(format!("attention numerator s1 = {s1} is non-finite")));
            }
            Ok(sigmoid(s1 / att_denominator(s2)?))
        }
        (k, _) => Err(MidamError::Argument(format!("inner value does not match {k} pooling"))),
    }
}

pub fn pool(p: &ModelParams, bag: &Bag, subset: &[usize], kind: PoolKind) -> Result<f64> {
    SubsetForward::for_kind(p, bag, subset, kind)?.pool(kind)
}

/// Deterministic full-bag prediction `h(w; X)`.
pub fn pool_full(p: &ModelParams, bag: &Bag, kind: PoolKind) -> Result<f64> {
    pool(p, bag, &bag.all_indices(), kind)
}

pub fn pool_vjp(
    p: &ModelParams,
    bag: &Bag,
    subset: &[usize],
    kind: PoolKind,
    s_eval: Option<&InnerValue>,
    upstream: f64,
) -> Result<ParamGrad> {
    let mut grad = p.weights.zeros_like();
    SubsetForward::for_kind(p, bag, subset, kind)?.vjp_into(p, kind, s_eval, upstream, &mut grad)?;
    Ok(grad)
}
