//! Train a few epochs, save a checkpoint with the tracked pooling state,
//! reload it and continue training from where it stopped.
//!
//! cargo run --example checkpoint_roundtrip

use midam::checkpoint::Checkpoint;
use midam::data::{generate_synthetic, SyntheticSpec};
use midam::trainer::{train, train_from, TrainerState};
use midam::TrainConfig;

fn main() -> midam::Result<()> {
    let ds = generate_synthetic(&SyntheticSpec { n_pos: 20, n_neg: 20, bag_size: 8, dim: 10, witness_shift: 2.0, witness_count: 1, seed: 0 })?;
    let cfg = TrainConfig { epochs: 10, s_pos: 2, s_neg: 2, ..TrainConfig::default() };
    let first = train(&ds, &ds, &ds, &cfg)?;

    let ck = Checkpoint {
        epoch: cfg.epochs,
        kind: cfg.kind,
        params: first.final_state.params.clone(),
        pool_state: first.final_state.pool_state.clone(),
    };
    let path = std::env::temp_dir().join("midam-example-checkpoint");
    ck.save(&path)?;
    let back = Checkpoint::load(&path)?;
    assert_eq!(back, ck);
    println!("saved and reloaded {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());

    let mut st = TrainerState::with_params(&ds, &cfg, back.params)?;
    st.pool_state = back.pool_state;
    let more = train_from(st, &ds, &ds, &ds, &cfg, &mut |_| Ok(()))?;
    let last = |rows: &[midam::eval::MetricsRow]| rows.last().map_or(f64::NAN, |r| r.train_auc);
    println!("train AUC after 10 epochs {:.4}, after 10 more {:.4}", last(&first.metrics), last(&more.metrics));
    Ok(())
}
