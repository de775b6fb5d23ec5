//! Repeated stratified cross-validation on a bag CSV, with the learning rate
//! picked per trial by validation AUC.
//!
//! cargo run --release --example cross_validation_musk -- data/musk1.csv

use midam::cv::{run_cv, CvConfig};
use midam::data::{load_csv, CsvSchema};
use midam::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "data/musk1.csv".into());
    let ds = load_csv(&path, &CsvSchema::default())?;
    println!("{path}: {} bags ({} positive), {} instances, d = {}", ds.len(), ds.n_pos(), ds.n_instances(), ds.dim());

    let cv = CvConfig { lr_grid: vec![0.1, 0.01, 0.001], ..CvConfig::default() };
    let report = run_cv(&ds, &TrainConfig::default(), &cv)?;
    for t in &report.trials {
        println!("fold {} seed {}: eta {:<5} best epoch {:3}  test AUC {:.4}", t.fold, t.seed, t.eta, t.best_epoch, t.test_auc_at_best_val);
    }
    for f in &report.failures {
        println!("fold {} seed {} failed: {}", f.fold, f.seed, f.error);
    }
    if let Some(s) = report.summary() {
        println!("test AUC {s} over {} trials", s.n);
    }
    Ok(())
}
