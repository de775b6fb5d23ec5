//! Train with different per-bag instance batch sizes and report how many
//! epochs each needs to reach a training AUC of 0.9.
//!
//! cargo run --release --example instance_batch_ablation -- [data.csv]

use midam::data::{generate_synthetic, load_csv, stratified_split, CsvSchema, Standardizer, SyntheticSpec};
use midam::diag::epochs_to_train_auc;
use midam::trainer::{train, FULL_BAG};
use midam::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = match std::env::args().nth(1) {
        Some(path) => load_csv(path, &CsvSchema::default())?,
        None => generate_synthetic(&SyntheticSpec { n_pos: 60, n_neg: 60, bag_size: 16, dim: 10, witness_shift: 2.0, witness_count: 2, seed: 0 })?,
    };
    let split = stratified_split(&ds, 5, 0.1, 0)?.swap_remove(0);
    let z = Standardizer::fit(&split.train);
    let (tr, va, te) = (z.apply(&split.train), z.apply(&split.val), z.apply(&split.test));

    for b in [1, 2, 4, 8, FULL_BAG] {
        let label = if b == FULL_BAG { "full".to_string() } else { b.to_string() };
        let mut reached = Vec::new();
        for seed in 0..3 {
            let out = train(&tr, &va, &te, &TrainConfig { b, seed, epochs: 40, s_pos: 2, s_neg: 2, ..TrainConfig::default() })?;
            reached.push(epochs_to_train_auc(&out.metrics, 0.9).map_or("-".into(), |e| e.to_string()));
        }
        println!("b = {label:>4}: epochs to train AUC 0.9 per seed: {}", reached.join(", "));
    }
    Ok(())
}
