//! Compare the analytic gradient of the full-batch AUC min-max objective with
//! central finite differences, for each pooling operator.
//!
//! cargo run --example gradient_check

use midam::data::{generate_synthetic, SyntheticSpec};
use midam::model::ModelParams;
use midam::objective::{eval_full, grad_estimators, MarginConfig};
use midam::sampler::SampleBatch;
use midam::PoolKind;

fn main() -> midam::Result<()> {
    let ds = generate_synthetic(&SyntheticSpec { n_pos: 3, n_neg: 3, bag_size: 5, dim: 4, witness_shift: 1.0, witness_count: 1, seed: 4 })?;
    let cfg = MarginConfig::default();
    let h = 1e-5;

    for kind in [PoolKind::Mean, PoolKind::Max, PoolKind::SmoothedMax { tau: 0.5 }, PoolKind::Attention] {
        let p = ModelParams::init(4, 3, 9, 2.0)?;
        let est = grad_estimators(&p, &ds, &SampleBatch::full(&ds), None, kind, &cfg)?;
        let analytic: Vec<f64> = est.g_w.iter().copied().collect();

        let mut worst: f64 = 0.0;
        for (k, g) in analytic.iter().enumerate() {
            let shifted = |delta: f64| -> midam::Result<f64> {
                let mut q = p.clone();
                *q.weights.iter_mut().nth(k).unwrap() += delta;
                Ok(eval_full(&q, &ds, kind, &cfg)?.total)
            };
            let fd = (shifted(h)? - shifted(-h)?) / (2.0 * h);
            worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-6));
        }
        println!("{:>8}: {} weights, max relative error {worst:.2e}", kind.to_string(), analytic.len());
    }
    Ok(())
}
