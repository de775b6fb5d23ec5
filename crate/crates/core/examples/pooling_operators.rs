//! Evaluate every pooling operator on one bag and show how smoothed-max
//! moves from the mean to the max as tau shrinks.
//!
//! cargo run --example pooling_operators

use midam::model::ModelParams;
use midam::pooling::{inner_f1, outer_f2, pool_full};
use midam::{Bag, PoolKind};

fn main() -> midam::Result<()> {
    let bag = Bag::new(0, true, vec![vec![0.3, -1.2, 0.8], vec![2.0, 1.5, -0.4], vec![-0.7, 0.1, 0.0], vec![1.1, -0.3, 2.2]])?;
    let p = ModelParams::init(3, 4, 7, 3.0)?;

    let phis: Vec<f64> = bag.instances().map(|x| p.forward(x).map(|f| f.phi)).collect::<midam::Result<_>>()?;
    println!("instance scores: {phis:.4?}");

    for kind in [PoolKind::Mean, PoolKind::Max, PoolKind::SmoothedMax { tau: 0.1 }, PoolKind::Attention] {
        println!("{:>8}: {:.6}", kind.to_string(), pool_full(&p, &bag, kind)?);
    }

    println!("\nsmoothed-max by tau");
    for tau in [100.0, 1.0, 0.1, 0.01] {
        let kind = PoolKind::smoothed_max(tau)?;
        let s = inner_f1(&p, &bag, &bag.all_indices(), kind)?;
        println!("  tau {tau:>7}: f1 = {:>12.5e}  f2(f1) = {:.6}", s.components()[0], outer_f2(&s, kind)?);
    }
    Ok(())
}
