//! Reference implementation written independently of the library: nested
//! `Vec` matrices, explicit chain rule per pooling, and a plain projected
//! gradient descent-ascent loop on the full objective.
#![allow(dead_code)]

use midam::data::{generate_synthetic, BagDataset, SyntheticSpec};
use midam::model::ModelParams;
use midam::PoolKind;

/// Flat parameter vector in the library's tensor order
/// `W1, b1, w_c, c0, V, w_a`, followed by `a, b, alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub d: usize,
    pub m: usize,
    pub v: Vec<f64>,
}

impl Theta {
    pub fn from_params(p: &ModelParams) -> Self {
        let mut v: Vec<f64> = p.weights.iter().copied().collect();
        v.extend([p.a, p.b, p.alpha]);
        Self { d: p.dim(), m: p.att_dim(), v }
    }

    pub fn n_weights(&self) -> usize {
        self.d * self.d + 2 * self.d + 1 + self.m * self.d + self.m
    }

    fn w1(&self, i: usize, j: usize) -> f64 {
        self.v[i * self.d + j]
    }
    fn b1(&self, i: usize) -> f64 {
        self.v[self.d * self.d + i]
    }
    fn wc(&self, i: usize) -> f64 {
        self.v[self.d * self.d + self.d + i]
    }
    fn c0(&self) -> f64 {
        self.v[self.d * self.d + 2 * self.d]
    }
    fn vv(&self, k: usize, j: usize) -> f64 {
        self.v[self.d * self.d + 2 * self.d + 1 + k * self.d + j]
    }
    fn wa(&self, k: usize) -> f64 {
        self.v[self.d * self.d + 2 * self.d + 1 + self.m * self.d + k]
    }
    pub fn a(&self) -> f64 {
        self.v[self.n_weights()]
    }
    pub fn b(&self) -> f64 {
        self.v[self.n_weights() + 1]
    }
    pub fn alpha(&self) -> f64 {
        self.v[self.n_weights() + 2]
    }
}

fn sig(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Forward quantities of one instance.
pub struct Inst {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub delta: f64,
    pub phi: f64,
    pub g: f64,
}

pub fn instance(th: &Theta, x: &[f64]) -> Inst {
    let (d, m) = (th.d, th.m);
    let t: Vec<f64> = (0..d).map(|i| ((0..d).map(|j| th.w1(i, j) * x[j]).sum::<f64>() + th.b1(i)).tanh()).collect();
    let delta = (0..d).map(|i| th.wc(i) * t[i]).sum::<f64>() + th.c0();
    let u: Vec<f64> = (0..m).map(|k| (0..d).map(|j| th.vv(k, j) * t[j]).sum::<f64>().tanh()).collect();
    let g = (0..m).map(|k| th.wa(k) * u[k]).sum::<f64>();
    Inst { t, u, delta, phi: sig(delta), g }
}

/// Bag prediction and its derivatives with respect to each instance's
/// `delta` and `g`.
pub fn pool_with_partials(th: &Theta, rows: &[&[f64]], kind: PoolKind) -> (f64, Vec<Inst>, Vec<f64>, Vec<f64>) {
    let insts: Vec<Inst> = rows.iter().map(|x| instance(th, x)).collect();
    let n = insts.len();
    let mut d_delta = vec![0.0; n];
    let mut d_g = vec![0.0; n];
    let h = match kind {
        PoolKind::Mean => {
            for (k, it) in insts.iter().enumerate() {
                d_delta[k] = it.phi * (1.0 - it.phi) / n as f64;
            }
            insts.iter().map(|it| it.phi).sum::<f64>() / n as f64
        }
        PoolKind::Max => {
            let mut best = 0;
            for k in 1..n {
                if insts[k].phi > insts[best].phi {
                    best = k;
                }
            }
            d_delta[best] = insts[best].phi * (1.0 - insts[best].phi);
            insts[best].phi
        }
        PoolKind::SmoothedMax { tau } => {
            // shifted log-sum-exp
            let top = insts.iter().map(|it| it.phi).fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = insts.iter().map(|it| ((it.phi - top) / tau).exp()).collect();
            let z: f64 = e.iter().sum();
            for (k, it) in insts.iter().enumerate() {
                d_delta[k] = e[k] / z * it.phi * (1.0 - it.phi);
            }
            top + tau * (z / n as f64).ln()
        }
        PoolKind::Attention => {
            let gc: Vec<f64> = insts.iter().map(|it| it.g.clamp(-30.0, 30.0)).collect();
            let top = gc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = gc.iter().map(|g| (g - top).exp()).collect();
            let z: f64 = e.iter().sum();
            let pw: Vec<f64> = e.iter().map(|v| v / z).collect();
            let r: f64 = pw.iter().zip(&insts).map(|(p, it)| p * it.delta).sum();
            let h = sig(r);
            let dr = h * (1.0 - h);
            for (k, it) in insts.iter().enumerate() {
                d_delta[k] = dr * pw[k];
                d_g[k] = if it.g.abs() < 30.0 { dr * pw[k] * (it.delta - r) } else { 0.0 };
            }
            h
        }
    };
    (h, insts, d_delta, d_g)
}

pub fn predict(th: &Theta, rows: &[&[f64]], kind: PoolKind) -> f64 {
    pool_with_partials(th, rows, kind).0
}

/// Adds `up·∂h/∂w` of one bag into `grad` (weights part only).
fn backprop_bag(th: &Theta, rows: &[&[f64]], kind: PoolKind, up: f64, grad: &mut [f64]) {
    let (d, m) = (th.d, th.m);
    let o_b1 = d * d;
    let o_wc = o_b1 + d;
    let o_c0 = o_wc + d;
    let o_v = o_c0 + 1;
    let o_wa = o_v + m * d;
    let (_, insts, dd, dg) = pool_with_partials(th, rows, kind);
    for (k, it) in insts.iter().enumerate() {
        let (ed, eg) = (up * dd[k], up * dg[k]);
        let mut dt = vec![0.0; d];
        grad[o_c0] += ed;
        for i in 0..d {
            grad[o_wc + i] += ed * it.t[i];
            dt[i] += ed * th.wc(i);
        }
        for q in 0..m {
            grad[o_wa + q] += eg * it.u[q];
            let du = eg * th.wa(q) * (1.0 - it.u[q] * it.u[q]);
            for j in 0..d {
                grad[o_v + q * d + j] += du * it.t[j];
                dt[j] += du * th.vv(q, j);
            }
        }
        for i in 0..d {
            let dz = dt[i] * (1.0 - it.t[i] * it.t[i]);
            grad[o_b1 + i] += dz;
            for j in 0..d {
                grad[i * d + j] += dz * rows[k][j];
            }
        }
    }
}

fn rows(ds: &BagDataset, i: usize) -> Vec<&[f64]> {
    ds.bag(i).instances().collect()
}

/// The min-max margin objective at `th`.
pub fn objective(th: &Theta, ds: &BagDataset, kind: PoolKind, margin: f64) -> f64 {
    let h = |i: usize| predict(th, &rows(ds, i), kind);
    let (np, nn) = (ds.n_pos() as f64, ds.n_neg() as f64);
    let hp: Vec<f64> = ds.pos_index().iter().map(|&i| h(i)).collect();
    let hn: Vec<f64> = ds.neg_index().iter().map(|&i| h(i)).collect();
    let f1 = hp.iter().map(|v| (v - th.a()).powi(2)).sum::<f64>() / np;
    let f2 = hn.iter().map(|v| (v - th.b()).powi(2)).sum::<f64>() / nn;
    let gap = margin + hn.iter().sum::<f64>() / nn - hp.iter().sum::<f64>() / np;
    f1 + f2 + th.alpha() * gap - th.alpha() * th.alpha() / 2.0
}

/// Exact gradient of [`objective`] with respect to every entry of `th.v`.
pub fn objective_grad(th: &Theta, ds: &BagDataset, kind: PoolKind, margin: f64) -> Vec<f64> {
    let nw = th.n_weights();
    let mut g = vec![0.0; nw + 3];
    let (np, nn) = (ds.n_pos() as f64, ds.n_neg() as f64);
    let (mut mp, mut mn) = (0.0, 0.0);
    for &i in ds.pos_index() {
        let r = rows(ds, i);
        let h = predict(th, &r, kind);
        mp += h / np;
        g[nw] += -2.0 * (h - th.a()) / np;
        backprop_bag(th, &r, kind, (2.0 * (h - th.a()) - th.alpha()) / np, &mut g);
    }
    for &i in ds.neg_index() {
        let r = rows(ds, i);
        let h = predict(th, &r, kind);
        mn += h / nn;
        g[nw + 1] += -2.0 * (h - th.b()) / nn;
        backprop_bag(th, &r, kind, (2.0 * (h - th.b()) + th.alpha()) / nn, &mut g);
    }
    g[nw + 2] = margin + mn - mp - th.alpha();
    g
}

/// Mean BCE of full-bag predictions, with the library's clamp.
pub fn ce_loss(th: &Theta, ds: &BagDataset, kind: PoolKind) -> f64 {
    let n = ds.len() as f64;
    (0..ds.len())
        .map(|i| {
            let h = predict(th, &rows(ds, i), kind).clamp(1e-7, 1.0 - 1e-7);
            if ds.bag(i).label {
                -h.ln()
            } else {
                -(1.0 - h).ln()
            }
        })
        .sum::<f64>()
        / n
}

/// One simultaneous projected GDA step with weight decay on the network weights.
#[allow(clippy::too_many_arguments)]
pub fn gda_step(th: &mut Theta, ds: &BagDataset, kind: PoolKind, margin: f64, omega: f64, eta: f64, eta_dual: f64, wd: f64) {
    let g = objective_grad(th, ds, kind, margin);
    let nw = th.n_weights();
    for (w, gk) in th.v[..nw].iter_mut().zip(&g) {
        *w -= eta * (gk + wd * *w);
    }
    th.v[nw] -= eta * g[nw];
    th.v[nw + 1] -= eta * g[nw + 1];
    th.v[nw + 2] = (th.v[nw + 2] + eta_dual * g[nw + 2]).clamp(0.0, omega);
}

/// Central finite differences of `f` at every coordinate of `th`.
pub fn finite_diff(th: &Theta, step: f64, f: impl Fn(&Theta) -> f64) -> Vec<f64> {
    (0..th.v.len())
        .map(|k| {
            let mut plus = th.clone();
            plus.v[k] += step;
            let mut minus = th.clone();
            minus.v[k] -= step;
            (f(&plus) - f(&minus)) / (2.0 * step)
        })
        .collect()
}

/// Largest `|x - y| / max(|x|, |y|, floor)` over paired entries.
pub fn max_rel_err(x: &[f64], y: &[f64], floor: f64) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor)).fold(0.0, f64::max)
}

pub fn synthetic(n_pos: usize, n_neg: usize, bag_size: usize, dim: usize, seed: u64) -> BagDataset {
    generate_synthetic(&SyntheticSpec { n_pos, n_neg, bag_size, dim, witness_shift: 2.0, witness_count: 1, seed })
        .expect("synthetic data")
}

/// Small dataset with unequal bag sizes.
pub fn ragged_dataset(dim: usize, seed: u64) -> BagDataset {
    use midam::data::Bag;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let sizes = [3, 1, 4, 2];
    let bags = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let rows = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
            Bag::new(i as u64, i % 2 == 0, rows).unwrap()
        })
        .collect();
    BagDataset::new(bags).unwrap()
}

pub const ALL_POOLS: [PoolKind; 4] =
    [PoolKind::Mean, PoolKind::Max, PoolKind::SmoothedMax { tau: 0.1 }, PoolKind::Attention];
