//! Train MIDAM with smoothed-max pooling on generated bags and report the
//! test AUC of the model with the best validation AUC.
//!
//! cargo run --release --example synthetic_quickstart

use midam::data::{generate_synthetic, SyntheticSpec};
use midam::{PoolKind, TrainConfig};

fn main() -> midam::Result<()> {
    let spec = |seed| SyntheticSpec { n_pos: 50, n_neg: 50, bag_size: 8, dim: 10, witness_shift: 2.0, witness_count: 1, seed };
    let (train, val, test) = (generate_synthetic(&spec(1))?, generate_synthetic(&spec(2))?, generate_synthetic(&spec(3))?);

    let cfg = TrainConfig { kind: PoolKind::SmoothedMax { tau: 0.1 }, epochs: 50, s_pos: 2, s_neg: 2, ..TrainConfig::default() };
    let out = midam::trainer::train(&train, &val, &test, &cfg)?;

    for row in out.metrics.iter().filter(|r| r.epoch % 10 == 0) {
        println!("epoch {:3}  train {:.3}  val {:.3}  test {:.3}", row.epoch, row.train_auc, row.val_auc, row.test_auc);
    }
    let best = &out.metrics[out.best_epoch - 1];
    println!("best epoch {}: test AUC {:.4}", out.best_epoch, best.test_auc);
    Ok(())
}
