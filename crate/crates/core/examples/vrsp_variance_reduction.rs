//! Freeze a model, sample 4 of 32 instances per bag each round, and compare
//! the squared error of the tracked pooled prediction with the naive
//! mini-batch prediction.
//!
//! cargo run --release --example vrsp_variance_reduction

use midam::data::{generate_synthetic, SyntheticSpec};
use midam::diag::frozen_comparison;
use midam::model::ModelParams;
use midam::PoolKind;

fn main() -> midam::Result<()> {
    let ds = generate_synthetic(&SyntheticSpec { n_pos: 20, n_neg: 20, bag_size: 32, dim: 8, witness_shift: 2.0, witness_count: 2, seed: 0 })?;
    let p = ModelParams::init(8, 4, 3, 1.0)?;

    println!("{:>5} {:>6} {:>12} {:>12}", "pool", "gamma0", "vrsp mse", "naive mse");
    for kind in [PoolKind::SmoothedMax { tau: 0.1 }, PoolKind::Attention] {
        for gamma0 in [1.0, 0.5, 0.1, 0.01] {
            let c = frozen_comparison(&p, &ds, kind, 4, gamma0, 500, 1)?;
            println!("{:>5} {gamma0:>6} {:>12.4e} {:>12.4e}", kind.to_string(), c.vrsp_mse, c.naive_mse);
        }
    }
    Ok(())
}
