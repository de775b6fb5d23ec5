//! Instance-level network.
//!
//! ```text
//! hidden = tanh(W1·x + b1)                 encoder e(x), width = input dim
//! delta  = w_c·hidden + c0                 unnormalized score
//! phi    = sigmoid(delta)                  instance score in (0, 1)
//! g      = w_a·tanh(V·hidden)              attention logit
//! ```
//!
//! Gradients are vector-Jacobian products written out by hand; any scalar
//! function of `(delta, g)` for one instance is handled by [`accumulate_vjp`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MidamError, Result};

/// Attention logits are clamped to this range before exponentiation.
pub const LOGIT_CLAMP: f64 = 30.0;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Network weights (everything except the AUC auxiliaries). Also used as the
/// gradient container, since a gradient has the same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub dim: usize,
    pub att_dim: usize,
    /// `dim × dim`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub wc: Vec<f64>,
    pub c0: f64,
    /// `att_dim × dim`, row-major.
    pub v: Vec<f64>,
    pub wa: Vec<f64>,
}

pub type ParamGrad = Weights;

impl Weights {
    pub fn zeros(dim: usize, att_dim: usize) -> Self {
        Self {
            dim,
            att_dim,
            w1: vec![0.0; dim * dim],
            b1: vec![0.0; dim],
            wc: vec![0.0; dim],
            c0: 0.0,
            v: vec![0.0; att_dim * dim],
            wa: vec![0.0; att_dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dim, self.att_dim)
    }

    /// Named tensors in a fixed order: `W1, b1, w_c, c0, V, w_a`.
    pub fn tensors(&self) -> [(&'static str, &[f64]); 6] {
        [
            ("W1", &self.w1),
            ("b1", &self.b1),
            ("w_c", &self.wc),
            ("c0", std::slice::from_ref(&self.c0)),
            ("V", &self.v),
            ("w_a", &self.wa),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 6] {
        [
            ("W1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w_c", &mut self.wc),
            ("c0", std::slice::from_mut(&mut self.c0)),
            ("V", &mut self.v),
            ("w_a", &mut self.wa),
        ]
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.wc)
            .chain(std::iter::once(&self.c0))
            .chain(&self.v)
            .chain(&self.wa)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(&mut self.b1)
            .chain(&mut self.wc)
            .chain(std::iter::once(&mut self.c0))
            .chain(&mut self.v)
            .chain(&mut self.wa)
    }

    /// `self += k · other`
    pub fn add_scaled(&mut self, k: f64, other: &Self) {
        debug_assert_eq!((self.dim, self.att_dim), (other.dim, other.att_dim));
        self.iter_mut().zip(other.iter()).for_each(|(a, b)| *a += k * b);
    }

    pub fn scale(&mut self, k: f64) {
        self.iter_mut().for_each(|a| *a *= k);
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| t.iter().any(|v| !v.is_finite()))
            .map(|(name, _)| name)
    }
}

/// Network weights plus the AUC auxiliaries `a`, `b` and the dual variable `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub weights: Weights,
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
}

/// `max(4, ceil(dim / 2))`
pub fn default_att_dim(dim: usize) -> usize {
    dim.div_ceil(2).max(4)
}

impl ModelParams {
    /// Every weight i.i.d. uniform in `±scale/√dim`; `a = b = alpha = 0`.
    pub fn init(dim: usize, att_dim: usize, seed: u64, scale: f64) -> Result<Self> {
        if dim == 0 || att_dim == 0 {
            return Err(MidamError::Argument("model dimensions must be at least 1".into()));
        }
        let mut weights = Weights::zeros(dim, att_dim);
        let bound = scale * (1.0 / dim as f64).sqrt();
        if bound > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            weights.iter_mut().for_each(|w| *w = rng.random_range(-bound..=bound));
        }
        Ok(Self { weights, a: 0.0, b: 0.0, alpha: 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.weights.dim
    }

    pub fn att_dim(&self) -> usize {
        self.weights.att_dim
    }

    pub fn forward(&self, x: &[f64]) -> Result<InstanceForward> {
        if x.len() != self.dim() {
            return Err(MidamError::Shape { expected: self.dim(), got: x.len() });
        }
        Ok(forward_unchecked(&self.weights, x, true))
    }

    pub fn backward_phi(&self, x: &[f64], upstream: f64) -> Result<ParamGrad> {
        if !upstream.is_finite() {
            return Err(MidamError::Numeric(format!("non-finite upstream gradient {upstream}")));
        }
        let fwd = self.forward(x)?;
        let mut grad = self.weights.zeros_like();
        accumulate_vjp(&self.weights, x, &fwd, upstream * fwd.phi * (1.0 - fwd.phi), 0.0, &mut grad);
        Ok(grad)
    }

    /// VJP of the attention pair `(exp(g)·delta, exp(g))` for one instance.
    pub fn backward_att_pair(&self, x: &[f64], up_num: f64, up_den: f64) -> Result<ParamGrad> {
        if !(up_num.is_finite() && up_den.is_finite()) {
            return Err(MidamError::Numeric("non-finite upstream gradient".into()));
        }
        let fwd = self.forward(x)?;
        let mut grad = self.weights.zeros_like();
        let (d_delta, d_g) = att_pair_cotangent(&fwd, up_num, up_den);
        accumulate_vjp(&self.weights, x, &fwd, d_delta, d_g, &mut grad);
        Ok(grad)
    }
}

/// Per-instance forward quantities, plus the intermediates backward needs.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceForward {
    pub hidden: Vec<f64>,
    pub phi: f64,
    pub g_logit: f64,
    pub delta: f64,
    att_hidden: Vec<f64>,
}

impl InstanceForward {
    /// `exp(g)` with `g` clamped to `±LOGIT_CLAMP`.
    pub fn exp_g(&self) -> f64 {
        self.g_logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP).exp()
    }

    fn g_in_clamp_interior(&self) -> bool {
        self.g_logit.abs() < LOGIT_CLAMP
    }
}

/// With `attention = false` the attention branch is skipped and `g_logit` is 0.
pub(crate) fn forward_unchecked(w: &Weights, x: &[f64], attention: bool) -> InstanceForward {
    let d = w.dim;
    let hidden: Vec<f64> = w
        .w1
        .chunks_exact(d)
        .zip(&w.b1)
        .map(|(row, b)| (dot(row, x) + b).tanh())
        .collect();
    let delta = dot(&w.wc, &hidden) + w.c0;
    let att_hidden: Vec<f64> = if attention {
        w.v.chunks_exact(d).map(|row| dot(row, &hidden).tanh()).collect()
    } else {
        Vec::new()
    };
    let g_logit = dot(&w.wa, &att_hidden);
    InstanceForward { hidden, phi: sigmoid(delta), g_logit, delta, att_hidden }
}

/// Cotangents `(∂/∂delta, ∂/∂g)` of `up_num·exp(g)·delta + up_den·exp(g)`.
/// Outside the clamp interior `exp(g)` is constant in `g`.
pub(crate) fn att_pair_cotangent(fwd: &InstanceForward, up_num: f64, up_den: f64) -> (f64, f64) {
    let eg = fwd.exp_g();
    let d_g = if fwd.g_in_clamp_interior() { eg * (up_num * fwd.delta + up_den) } else { 0.0 };
    (up_num * eg, d_g)
}

/// Adds `d_delta·∂delta/∂w + d_g·∂g/∂w` into `grad`.
pub(crate) fn accumulate_vjp(w: &Weights, x: &[f64], fwd: &InstanceForward, d_delta: f64, d_g: f64, grad: &mut Weights) {
    let d = w.dim;
    // dL/dh starts with the classifier path
    let mut d_hidden: Vec<f64> = w.wc.iter().map(|c| d_delta * c).collect();
    grad.c0 += d_delta;
    grad.wc.iter_mut().zip(&fwd.hidden).for_each(|(gw, h)| *gw += d_delta * h);

    if d_g != 0.0 {
        for (k, (&wa_k, &t_k)) in w.wa.iter().zip(&fwd.att_hidden).enumerate() {
            grad.wa[k] += d_g * t_k;
            let du = d_g * wa_k * (1.0 - t_k * t_k);
            let v_row = &w.v[k * d..(k + 1) * d];
            let gv_row = &mut grad.v[k * d..(k + 1) * d];
            for j in 0..d {
                gv_row[j] += du * fwd.hidden[j];
                d_hidden[j] += du * v_row[j];
            }
        }
    }

    for (i, (dh, h)) in d_hidden.iter().zip(&fwd.hidden).enumerate() {
        let dz = dh * (1.0 - h * h);
        grad.b1[i] += dz;
        grad.w1[i * d..(i + 1) * d].iter_mut().zip(x).for_each(|(gw, xj)| *gw += dz * xj);
    }
}

/// Four independent accumulators in a fixed order: deterministic, and
/// lets the compiler vectorize.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a4, b4) = (a[..n].chunks_exact(4), b[..n].chunks_exact(4));
    let (ra, rb) = (a4.remainder(), b4.remainder());
    let mut acc = [0.0; 4];
    for (x, y) in a4.zip(b4) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
