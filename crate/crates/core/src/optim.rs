//! Primal update rules for `(w, a, b)`: heavy-ball momentum as a moving
//! average of gradient estimates, or an Adam-style normalized variant.

use crate::model::{ModelParams, ParamGrad, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Momentum,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
struct SecondMoment {
    w: Weights,
    a: f64,
    b: f64,
}

/// Moving averages of the primal gradient blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub v_w: ParamGrad,
    pub v_a: f64,
    pub v_b: f64,
    second: Option<SecondMoment>,
    pub step: u64,
}

/// Hyperparameters for one primal update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimalStep {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl MomentumState {
    pub fn new(p: &ModelParams, kind: OptimizerKind) -> Self {
        let second = match kind {
            OptimizerKind::Momentum => None,
            OptimizerKind::Adam => Some(SecondMoment { w: p.weights.zeros_like(), a: 0.0, b: 0.0 }),
        };
        Self { v_w: p.weights.zeros_like(), v_a: 0.0, v_b: 0.0, second, step: 0 }
    }

    /// Euclidean norm over all three blocks.
    pub fn norm(&self) -> f64 {
        (self.v_w.norm().powi(2) + self.v_a * self.v_a + self.v_b * self.v_b).sqrt()
    }

    /// `v <- beta1·v + (1 - beta1)·g`, then `(w, a, b) -= lr·v` (momentum) or
    /// `lr·v_hat / (sqrt(u_hat) + eps)` with bias-corrected moments (Adam).
    pub fn apply(&mut self, p: &mut ModelParams, g_w: &ParamGrad, g_a: f64, g_b: f64, hp: &PrimalStep) {
        let PrimalStep { lr, beta1, beta2, eps } = *hp;
        self.step += 1;
        self.v_w.scale(beta1);
        self.v_w.add_scaled(1.0 - beta1, g_w);
        self.v_a = beta1 * self.v_a + (1.0 - beta1) * g_a;
        self.v_b = beta1 * self.v_b + (1.0 - beta1) * g_b;

        match &mut self.second {
            None => {
                p.weights.add_scaled(-lr, &self.v_w);
                p.a -= lr * self.v_a;
                p.b -= lr * self.v_b;
            }
            Some(u) => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let adam = |param: &mut f64, m: f64, u: &mut f64, g: f64| {
                    *u = beta2 * *u + (1.0 - beta2) * g * g;
                    *param -= lr * (m / c1) / ((*u / c2).sqrt() + eps);
                };
                for ((w, (&m, uw)), &g) in p
                    .weights
                    .iter_mut()
                    .zip(self.v_w.iter().zip(u.w.iter_mut()))
                    .zip(g_w.iter())
                {
                    adam(w, m, uw, g);
                }
                adam(&mut p.a, self.v_a, &mut u.a, g_a);
                adam(&mut p.b, self.v_b, &mut u.b, g_b);
            }
        }
    }
}
