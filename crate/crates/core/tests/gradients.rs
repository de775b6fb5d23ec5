mod common;

use common::{finite_diff, max_rel_err, objective, objective_grad, ragged_dataset, Theta, ALL_POOLS};
use midam::model::ModelParams;
use midam::objective::{ce_loss_and_grad, eval_full, grad_estimators, predict_all, MarginConfig};
use midam::pooling::{inner_f1, pool_vjp};
use midam::sampler::SampleBatch;
use midam::vrsp::PoolState;

fn model(seed: u64) -> ModelParams {
    let mut p = ModelParams::init(5, 3, seed, 2.0).unwrap();
    p.a = 0.3;
    p.b = 0.6;
    p.alpha = 0.4;
    p
}

fn library_full_grad(p: &ModelParams, ds: &midam::BagDataset, kind: midam::PoolKind) -> Vec<f64> {
    let cfg = MarginConfig::default();
    let est = grad_estimators(p, ds, &SampleBatch::full(ds), None, kind, &cfg).unwrap();
    let mut g: Vec<f64> = est.g_w.iter().copied().collect();
    g.extend([est.g_a, est.g_b, est.g_alpha - p.alpha]);
    g
}

#[test]
fn forward_agrees_with_reference() {
    for seed in 0..5 {
        let ds = ragged_dataset(5, seed);
        let p = model(seed);
        let th = Theta::from_params(&p);
        for kind in ALL_POOLS {
            let lib = predict_all(&p, &ds, kind).unwrap();
            for (i, h) in lib.iter().enumerate() {
                let rows: Vec<&[f64]> = ds.bag(i).instances().collect();
                let r = common::predict(&th, &rows, kind);
                assert!((h - r).abs() < 1e-12, "{kind} bag {i}: {h} vs {r}");
            }
            let lib_obj = eval_full(&p, &ds, kind, &MarginConfig::default()).unwrap().total;
            assert!((lib_obj - objective(&th, &ds, kind, 0.1)).abs() < 1e-12);
        }
    }
}

#[test]
fn full_batch_gradient_matches_reference_backprop() {
    for seed in 0..5 {
        let ds = ragged_dataset(5, 10 + seed);
        let p = model(seed);
        let th = Theta::from_params(&p);
        for kind in ALL_POOLS {
            let lib = library_full_grad(&p, &ds, kind);
            let reference = objective_grad(&th, &ds, kind, 0.1);
            let err = max_rel_err(&lib, &reference, 1e-12);
            assert!(err < 1e-9, "{kind}: {err:e}");
        }
    }
}

#[test]
fn full_batch_gradient_matches_finite_differences() {
    for seed in 0..3 {
        let ds = ragged_dataset(5, 20 + seed);
        let p = model(seed);
        let th = Theta::from_params(&p);
        for kind in ALL_POOLS {
            let lib = library_full_grad(&p, &ds, kind);
            let fd = finite_diff(&th, 1e-5, |t| objective(t, &ds, kind, 0.1));
            let err = max_rel_err(&lib, &fd, 1e-6);
            assert!(err <= 1e-4, "{kind}: {err:e}");
        }
    }
}

#[test]
fn ce_gradient_matches_finite_differences() {
    for seed in 0..3 {
        let ds = ragged_dataset(5, 30 + seed);
        let p = model(seed);
        let th = Theta::from_params(&p);
        for kind in ALL_POOLS {
            let (loss, g) = ce_loss_and_grad(&p, &ds, &SampleBatch::full(&ds), kind).unwrap();
            assert!((loss - common::ce_loss(&th, &ds, kind)).abs() < 1e-12);
            let fd = finite_diff(&th, 1e-5, |t| common::ce_loss(t, &ds, kind));
            let lib: Vec<f64> = g.iter().copied().collect();
            let err = max_rel_err(&lib, &fd[..lib.len()], 1e-6);
            assert!(err <= 1e-4, "{kind}: {err:e}");
        }
    }
}

#[test]
fn tracked_state_equal_to_fresh_gives_naive_gradient() {
    let ds = ragged_dataset(5, 40);
    let p = model(1);
    let batch = SampleBatch::full(&ds);
    for kind in [ALL_POOLS[2], ALL_POOLS[3]] {
        let mut state = PoolState::init(&ds, kind, 0.5).unwrap();
        for &i in &batch.bag_ids {
            let bag = ds.bag(i);
            state.update(i, inner_f1(&p, bag, &bag.all_indices(), kind).unwrap()).unwrap();
        }
        let cfg = MarginConfig::default();
        let tracked = grad_estimators(&p, &ds, &batch, Some(&state), kind, &cfg).unwrap();
        let naive = grad_estimators(&p, &ds, &batch, None, kind, &cfg).unwrap();
        assert_eq!(tracked, naive);
    }
}

#[test]
fn vjp_at_subset_estimate_is_the_default() {
    let ds = ragged_dataset(5, 41);
    let p = model(2);
    let bag = ds.bag(2);
    let subset = [0, 3];
    for kind in [ALL_POOLS[2], ALL_POOLS[3]] {
        let s = inner_f1(&p, bag, &subset, kind).unwrap();
        let explicit = pool_vjp(&p, bag, &subset, kind, Some(&s), 0.7).unwrap();
        let implicit = pool_vjp(&p, bag, &subset, kind, None, 0.7).unwrap();
        let err = max_rel_err(
            &explicit.iter().copied().collect::<Vec<_>>(),
            &implicit.iter().copied().collect::<Vec<_>>(),
            1e-15,
        );
        assert!(err < 1e-12, "{kind}: {err:e}");
    }
}
