use midam::checkpoint::Checkpoint;
use midam::data::{read_csv, write_csv, Bag, BagDataset, CsvSchema};
use midam::eval::auc;
use midam::model::ModelParams;
use midam::pooling::{outer_f2, pool, InnerValue, PoolKind};
use midam::vrsp::PoolState;
use proptest::prelude::*;

fn brute_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut total = 0.0;
    for p in pos {
        for n in neg {
            total += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    total / (pos.len() * neg.len()) as f64
}

/// Scores on a coarse grid so ties are common.
fn tied_scores(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-12i32..=12).prop_map(|k| k as f64 * 0.25), 1..max_len)
}

fn bag_rows(dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), 1..6)
}

proptest! {
    #[test]
    fn auc_matches_brute_force(pos in tied_scores(40), neg in tied_scores(40)) {
        prop_assert_eq!(auc(&pos, &neg).unwrap(), brute_auc(&pos, &neg));
    }

    #[test]
    fn auc_complement(pos in tied_scores(30), neg in tied_scores(30)) {
        prop_assert_eq!(auc(&pos, &neg).unwrap() + auc(&neg, &pos).unwrap(), 1.0);
    }

    #[test]
    fn auc_permutation_and_monotone_invariance(pos in tied_scores(30), neg in tied_scores(30), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let base = auc(&pos, &neg).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (mut p2, mut n2) = (pos.clone(), neg.clone());
        p2.shuffle(&mut rng);
        n2.shuffle(&mut rng);
        prop_assert_eq!(auc(&p2, &n2).unwrap(), base);
        let affine = |v: &Vec<f64>| v.iter().map(|x| 2.0 * x + 1.0).collect::<Vec<_>>();
        prop_assert_eq!(auc(&affine(&pos), &affine(&neg)).unwrap(), base);
        let squash = |v: &Vec<f64>| v.iter().map(|x| x.tanh()).collect::<Vec<_>>();
        prop_assert_eq!(auc(&squash(&pos), &squash(&neg)).unwrap(), base);
    }

    #[test]
    fn smoothed_max_lies_between_mean_and_max(rows in bag_rows(3), seed in 0u64..1000, tau in 0.01f64..5.0) {
        let p = ModelParams::init(3, 4, seed, 3.0).unwrap();
        let bag = Bag::new(0, true, rows).unwrap();
        let all = bag.all_indices();
        let mean = pool(&p, &bag, &all, PoolKind::Mean).unwrap();
        let max = pool(&p, &bag, &all, PoolKind::Max).unwrap();
        let smx = pool(&p, &bag, &all, PoolKind::SmoothedMax { tau }).unwrap();
        prop_assert!(mean <= smx + 1e-12 && smx <= max + 1e-12, "{} {} {}", mean, smx, max);
    }

    #[test]
    fn attention_lies_between_extreme_instances(rows in bag_rows(3), seed in 0u64..1000) {
        let p = ModelParams::init(3, 4, seed, 3.0).unwrap();
        let bag = Bag::new(0, true, rows).unwrap();
        let all = bag.all_indices();
        let att = pool(&p, &bag, &all, PoolKind::Attention).unwrap();
        let phis: Vec<f64> = bag.instances().map(|x| p.forward(x).unwrap().phi).collect();
        let lo = phis.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = phis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo - 1e-12 <= att && att <= hi + 1e-12);
    }

    #[test]
    fn smoothed_max_outer_is_tau_lipschitz(tau in 0.05f64..2.0, u in 0.0f64..1.0, v in 0.0f64..1.0) {
        // the inner value of a sigmoid score lives in [1, e^(1/tau)]
        let top = (1.0 / tau).exp();
        let (s1, s2) = (1.0 + u * (top - 1.0), 1.0 + v * (top - 1.0));
        let kind = PoolKind::SmoothedMax { tau };
        let gap = (outer_f2(&InnerValue::Scalar(s1), kind).unwrap() - outer_f2(&InnerValue::Scalar(s2), kind).unwrap()).abs();
        prop_assert!(gap <= tau * (s1 - s2).abs() * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn tracked_estimate_stays_between_old_and_fresh(gamma in 0.01f64..1.0, a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let kind = PoolKind::SmoothedMax { tau: 0.1 };
        let mut st = PoolState::new(1, kind, gamma).unwrap();
        st.update(0, InnerValue::Scalar(a)).unwrap();
        let InnerValue::Scalar(s) = st.update(0, InnerValue::Scalar(b)).unwrap() else { unreachable!() };
        prop_assert!(a.min(b) - 1e-12 <= s && s <= a.max(b) + 1e-12);
    }

    #[test]
    fn csv_round_trip(bags in prop::collection::vec((any::<bool>(), bag_rows(4)), 1..8), header in any::<bool>()) {
        let bags: Vec<Bag> = bags
            .into_iter()
            .enumerate()
            .map(|(i, (label, rows))| Bag::new(i as u64 * 7 + 1, label, rows).unwrap())
            .collect();
        let ds = BagDataset::new(bags).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf, header).unwrap();
        let back = read_csv(buf.as_slice(), &CsvSchema { has_header: header, ..CsvSchema::default() }).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>(), d in 1usize..6, m in 1usize..5, a in -1e3f64..1e3) {
        let mut params = ModelParams::init(d, m, seed, 1.5).unwrap();
        params.a = a;
        params.alpha = a.abs() / 7.0;
        let ck = Checkpoint { epoch: 3, kind: PoolKind::SmoothedMax { tau: 0.3 }, params, pool_state: None };
        let mut buf = Vec::new();
        ck.write(&mut buf).unwrap();
        prop_assert_eq!(Checkpoint::read(buf.as_slice()).unwrap(), ck);
    }
}
