//! Two-level sampling: bags from per-class shuffled queues, then a uniform
//! instance subset inside each sampled bag.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::BagDataset;
use crate::error::{MidamError, Result};

/// Sampled bags (positives first) and the instance subset drawn for each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleBatch {
    pub bag_ids: Vec<usize>,
    pub n_pos: usize,
    /// Sorted instance indices, one list per entry of `bag_ids`.
    pub per_bag_instances: Vec<Vec<usize>>,
}

impl SampleBatch {
    pub fn positives(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.bag_ids[..self.n_pos]
            .iter()
            .copied()
            .zip(self.per_bag_instances[..self.n_pos].iter().map(Vec::as_slice))
    }

    pub fn negatives(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.bag_ids[self.n_pos..]
            .iter()
            .copied()
            .zip(self.per_bag_instances[self.n_pos..].iter().map(Vec::as_slice))
    }

    pub fn n_neg(&self) -> usize {
        self.bag_ids.len() - self.n_pos
    }

    /// Every bag of the dataset with every instance: the deterministic limit.
    pub fn full(ds: &BagDataset) -> Self {
        let bag_ids: Vec<usize> = ds.pos_index().iter().chain(ds.neg_index()).copied().collect();
        let per_bag_instances = bag_ids.iter().map(|&i| ds.bag(i).all_indices()).collect();
        Self { bag_ids, n_pos: ds.n_pos(), per_bag_instances }
    }
}

#[derive(Debug, Clone)]
struct ClassQueue {
    order: Vec<usize>,
    cursor: usize,
}

impl ClassQueue {
    fn new(members: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut order = members.to_vec();
        order.shuffle(rng);
        Self { order, cursor: 0 }
    }

    /// Takes `k` distinct members, reshuffling when the queue runs dry. Members
    /// already taken in this draw are pushed past the refill point.
    fn take(&mut self, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::with_capacity(k);
        while out.len() < k {
            if self.cursor == self.order.len() {
                self.order.shuffle(rng);
                self.cursor = 0;
                let (mut fresh, mut taken): (Vec<usize>, Vec<usize>) =
                    self.order.iter().partition(|&&i| !out.contains(&i));
                fresh.append(&mut taken);
                self.order = fresh;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// Owns the sampling RNG; one sampler per training loop.
#[derive(Debug, Clone)]
pub struct BagSampler {
    rng: ChaCha8Rng,
    pos: ClassQueue,
    neg: ClassQueue,
}

impl BagSampler {
    pub fn new(ds: &BagDataset, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos = ClassQueue::new(ds.pos_index(), &mut rng);
        let neg = ClassQueue::new(ds.neg_index(), &mut rng);
        Self { rng, pos, neg }
    }

    pub fn sample_batch(&mut self, ds: &BagDataset, s_pos: usize, s_neg: usize, b: usize) -> Result<SampleBatch> {
        if s_pos > ds.n_pos() || s_neg > ds.n_neg() {
            return Err(MidamError::Argument(format!(
                "bag batch ({s_pos}, {s_neg}) exceeds class sizes ({}, {})",
                ds.n_pos(),
                ds.n_neg()
            )));
        }
        if b == 0 {
            return Err(MidamError::Argument("instance batch size must be at least 1".into()));
        }
        let mut bag_ids = self.pos.take(s_pos, &mut self.rng);
        bag_ids.extend(self.neg.take(s_neg, &mut self.rng));
        let per_bag_instances = bag_ids
            .iter()
            .map(|&i| sample_instances(ds.bag(i).len(), b, &mut self.rng))
            .collect();
        Ok(SampleBatch { bag_ids, n_pos: s_pos, per_bag_instances })
    }
}

/// `min(b, n)` distinct indices drawn uniformly from `0..n`, sorted.
pub fn sample_instances(n: usize, b: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if b >= n {
        return (0..n).collect();
    }
    let mut idx = index::sample(rng, n, b).into_vec();
    idx.sort_unstable();
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};

    fn ds(n_pos: usize, n_neg: usize, bag_size: usize) -> BagDataset {
        generate_synthetic(&SyntheticSpec {
            n_pos,
            n_neg,
            bag_size,
            dim: 2,
            witness_shift: 1.0,
            witness_count: 1,
            seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn big_b_takes_whole_bags() {
        let ds = ds(3, 3, 5);
        let mut s = BagSampler::new(&ds, 0);
        let batch = s.sample_batch(&ds, 1, 1, 100).unwrap();
        for inst in &batch.per_bag_instances {
            assert_eq!(inst, &(0..5).collect::<Vec<_>>());
        }
    }

    #[test]
    fn exhaustive_positive_sampling() {
        let ds = ds(8, 10, 3);
        let mut s = BagSampler::new(&ds, 1);
        for _ in 0..5 {
            let batch = s.sample_batch(&ds, 8, 3, 2).unwrap();
            let mut pos: Vec<usize> = batch.positives().map(|(i, _)| i).collect();
            pos.sort_unstable();
            assert_eq!(pos, ds.pos_index());
        }
    }

    #[test]
    fn batch_shape_matches_protocol() {
        let ds = ds(20, 20, 10);
        let mut s = BagSampler::new(&ds, 2);
        let batch = s.sample_batch(&ds, 8, 8, 4).unwrap();
        assert_eq!(batch.bag_ids.len(), 16);
        let total: usize = batch.per_bag_instances.iter().map(Vec::len).sum();
        assert!(total <= 64);
        assert!(batch.positives().all(|(i, _)| ds.bag(i).label));
        assert!(batch.negatives().all(|(i, _)| !ds.bag(i).label));
    }

    #[test]
    fn no_duplicate_bag_across_refill() {
        let ds = ds(5, 5, 3);
        let mut s = BagSampler::new(&ds, 7);
        for _ in 0..200 {
            let batch = s.sample_batch(&ds, 3, 4, 2).unwrap();
            let mut ids = batch.bag_ids.clone();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids.len(), 7);
        }
    }

    #[test]
    fn oversized_batch_rejected() {
        let ds = ds(2, 2, 3);
        let mut s = BagSampler::new(&ds, 0);
        assert!(s.sample_batch(&ds, 3, 1, 1).is_err());
        assert!(s.sample_batch(&ds, 1, 1, 0).is_err());
    }

    #[test]
    fn queue_fairness_over_an_epoch() {
        let ds = ds(7, 11, 2);
        let mut s = BagSampler::new(&ds, 11);
        let iters = 25;
        let (sp, sn) = (3, 4);
        let mut counts = vec![0usize; ds.len()];
        for _ in 0..iters {
            for i in s.sample_batch(&ds, sp, sn, 1).unwrap().bag_ids {
                counts[i] += 1;
            }
        }
        for &i in ds.pos_index() {
            assert!(counts[i] >= iters * sp / ds.n_pos(), "bag {i}: {}", counts[i]);
        }
        for &i in ds.neg_index() {
            assert!(counts[i] >= iters * sn / ds.n_neg(), "bag {i}: {}", counts[i]);
        }
    }

    #[test]
    fn instance_subsampling_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 10_000;
        let mut counts = [0usize; 10];
        for _ in 0..draws {
            let idx = sample_instances(10, 2, &mut rng);
            assert_eq!(idx.len(), 2);
            assert_ne!(idx[0], idx[1]);
            for j in idx {
                counts[j] += 1;
            }
        }
        let p = 0.2;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        for c in counts {
            let freq = c as f64 / draws as f64;
            // Bonferroni over ten cells
            assert!((freq - p).abs() <= 4.0 * se, "freq {freq}");
        }
    }
}
