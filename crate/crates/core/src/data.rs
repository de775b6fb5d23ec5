//! Multi-instance datasets: in-memory representation, CSV I/O, the Gaussian
//! witness generator, stratified splitting and feature standardization.
//!
//! The canonical on-disk format is one instance per row:
//!
//! ```text
//! bag_id,label,f0,f1,...,f{d-1}
//! ```
//!
//! A header row is optional and controlled by [`CsvSchema::has_header`].

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{MidamError, Result};

/// A labeled bag of instances sharing one feature dimension.
///
/// Instances are stored row-major in a flat buffer; `instance(j)` borrows row `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub id: u64,
    pub label: bool,
    dim: usize,
    features: Vec<f64>,
}

impl Bag {
    pub fn new(id: u64, label: bool, instances: Vec<Vec<f64>>) -> Result<Self> {
        let first = instances
            .first()
            .ok_or_else(|| MidamError::Argument(format!("bag {id} has no instances")))?;
        let dim = first.len();
        if dim == 0 {
            return Err(MidamError::Argument(format!("bag {id} has zero-dimensional instances")));
        }
        let mut features = Vec::with_capacity(dim * instances.len());
        for row in &instances {
            if row.len() != dim {
                return Err(MidamError::Shape { expected: dim, got: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(MidamError::Numeric(format!("bag {id} contains a non-finite feature")));
            }
            features.extend_from_slice(row);
        }
        Ok(Self { id, label, dim, features })
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn instance(&self, j: usize) -> &[f64] {
        &self.features[j * self.dim..(j + 1) * self.dim]
    }

    pub fn instances(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    /// Indices `0..len()`, the subset that makes pooling deterministic.
    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    fn features_mut(&mut self) -> &mut [f64] {
        &mut self.features
    }
}

/// Bags plus the positive/negative index partition.
#[derive(Debug, Clone, PartialEq)]
pub struct BagDataset {
    bags: Vec<Bag>,
    pos_index: Vec<usize>,
    neg_index: Vec<usize>,
    dim: usize,
}

impl BagDataset {
    pub fn new(bags: Vec<Bag>) -> Result<Self> {
        let dim = bags.first().ok_or(MidamError::EmptyDataset)?.dim();
        let mut pos_index = Vec::new();
        let mut neg_index = Vec::new();
        for (i, bag) in bags.iter().enumerate() {
            if bag.dim() != dim {
                return Err(MidamError::Shape { expected: dim, got: bag.dim() });
            }
            if bag.label {
                pos_index.push(i);
            } else {
                neg_index.push(i);
            }
        }
        Ok(Self { bags, pos_index, neg_index, dim })
    }

    pub fn bags(&self) -> &[Bag] {
        &self.bags
    }

    pub fn bag(&self, i: usize) -> &Bag {
        &self.bags[i]
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pos_index(&self) -> &[usize] {
        &self.pos_index
    }

    pub fn neg_index(&self) -> &[usize] {
        &self.neg_index
    }

    pub fn n_pos(&self) -> usize {
        self.pos_index.len()
    }

    pub fn n_neg(&self) -> usize {
        self.neg_index.len()
    }

    pub fn n_instances(&self) -> usize {
        self.bags.iter().map(Bag::len).sum()
    }

    pub fn max_bag_size(&self) -> usize {
        self.bags.iter().map(Bag::len).max().unwrap_or(0)
    }

    /// Training sets need both classes.
    pub fn require_both_classes(&self) -> Result<()> {
        if self.pos_index.is_empty() || self.neg_index.is_empty() {
            return Err(MidamError::Argument(format!(
                "dataset needs at least one bag per class (D+={}, D-={})",
                self.n_pos(),
                self.n_neg()
            )));
        }
        Ok(())
    }

    /// New dataset made of the given bag indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let bags = indices
            .iter()
            .map(|&i| self.bags.get(i).cloned().ok_or(MidamError::Index(i)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(bags)
    }
}

/// Column roles for [`load_csv`]. Every column that is neither the bag id nor
/// the label is a feature, in file order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvSchema {
    pub has_header: bool,
    pub bag_id_col: usize,
    pub label_col: usize,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self { has_header: false, bag_id_col: 0, label_col: 1 }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<BagDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<BagDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut order: Vec<u64> = Vec::new();
    let mut groups: HashMap<u64, (bool, u64, Vec<Vec<f64>>)> = HashMap::new();
    let mut dim: Option<usize> = None;

    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            MidamError::Parse { line, msg: e.to_string() }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |msg: String| MidamError::Parse { line, msg };

        let ncols = record.len();
        if ncols < 3 || schema.bag_id_col >= ncols || schema.label_col >= ncols {
            return Err(parse_err(format!("expected bag id, label and features, found {ncols} columns")));
        }
        let bag_id: u64 = record[schema.bag_id_col]
            .parse()
            .map_err(|_| parse_err(format!("bad bag id {:?}", &record[schema.bag_id_col])))?;
        let label = parse_label(&record[schema.label_col]).ok_or_else(|| {
            parse_err(format!("label must be 0 or 1, found {:?}", &record[schema.label_col]))
        })?;
        let features = record
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != schema.bag_id_col && *c != schema.label_col)
            .map(|(c, v)| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| parse_err(format!("bad feature value {v:?} in column {c}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None => dim = Some(features.len()),
            Some(d) if d != features.len() => {
                return Err(parse_err(format!("expected {d} features, found {}", features.len())));
            }
            Some(_) => {}
        }

        match groups.get_mut(&bag_id) {
            Some((bag_label, first_line, rows)) => {
                if *bag_label != label {
                    return Err(MidamError::Integrity(format!(
                        "bag {bag_id} has rows labeled both 0 and 1 (lines {first_line} and {line})"
                    )));
                }
                rows.push(features);
            }
            None => {
                order.push(bag_id);
                groups.insert(bag_id, (label, line, vec![features]));
            }
        }
    }

    if order.is_empty() {
        return Err(MidamError::EmptyDataset);
    }
    let bags = order
        .into_iter()
        .map(|id| {
            let (label, _, rows) = groups.remove(&id).expect("grouped bag");
            Bag::new(id, label, rows)
        })
        .collect::<Result<Vec<_>>>()?;
    BagDataset::new(bags)
}

fn parse_label(s: &str) -> Option<bool> {
    let v = s.parse::<f64>().ok()?;
    (v == 0.0 || v == 1.0).then_some(v == 1.0)
}

/// Writes the canonical format. Floats use the shortest representation that
/// round-trips exactly.
pub fn save_csv(ds: &BagDataset, path: impl AsRef<Path>, header: bool) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(ds, std::io::BufWriter::new(file), header)
}

pub fn write_csv<W: Write>(ds: &BagDataset, mut out: W, header: bool) -> Result<()> {
    if header {
        write!(out, "bag_id,label")?;
        for k in 0..ds.dim() {
            write!(out, ",f{k}")?;
        }
        writeln!(out)?;
    }
    for bag in ds.bags() {
        for row in bag.instances() {
            write!(out, "{},{}", bag.id, u8::from(bag.label))?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Parameters of the Gaussian witness model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n_pos: usize,
    pub n_neg: usize,
    pub bag_size: usize,
    pub dim: usize,
    pub witness_shift: f64,
    pub witness_count: usize,
    pub seed: u64,
}

/// Generated bags plus per-instance witness flags (only positive bags have witnesses).
#[derive(Debug, Clone)]
pub struct SyntheticBags {
    pub dataset: BagDataset,
    pub witness: Vec<Vec<bool>>,
}

/// Negative bags are pure N(0, I); positive bags hold `witness_count`
/// instances from N(witness_shift·1, I) at random positions.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<BagDataset> {
    generate_synthetic_with_witnesses(spec).map(|s| s.dataset)
}

pub fn generate_synthetic_with_witnesses(spec: &SyntheticSpec) -> Result<SyntheticBags> {
    if spec.n_pos == 0 || spec.n_neg == 0 || spec.bag_size == 0 || spec.dim == 0 || spec.witness_count == 0 {
        return Err(MidamError::Argument("all synthetic counts must be at least 1".into()));
    }
    if spec.witness_count > spec.bag_size {
        return Err(MidamError::Argument(format!(
            "witness_count {} exceeds bag_size {}",
            spec.witness_count, spec.bag_size
        )));
    }
    if !spec.witness_shift.is_finite() {
        return Err(MidamError::Argument("witness_shift must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut bags = Vec::with_capacity(spec.n_pos + spec.n_neg);
    let mut witness = Vec::with_capacity(spec.n_pos + spec.n_neg);

    for i in 0..spec.n_pos + spec.n_neg {
        let positive = i < spec.n_pos;
        let mut flags = vec![false; spec.bag_size];
        if positive {
            flags[..spec.witness_count].iter_mut().for_each(|f| *f = true);
            flags.shuffle(&mut rng);
        }
        let rows = flags
            .iter()
            .map(|&w| {
                let shift = if w { spec.witness_shift } else { 0.0 };
                (0..spec.dim)
                    .map(|_| shift + rng.sample::<f64, _>(StandardNormal))
                    .collect::<Vec<f64>>()
            })
            .collect();
        bags.push(Bag::new(i as u64, positive, rows)?);
        witness.push(flags);
    }
    Ok(SyntheticBags { dataset: BagDataset::new(bags)?, witness })
}

/// One cross-validation trial's partition.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: BagDataset,
    pub val: BagDataset,
    pub test: BagDataset,
}

/// Draws a stratified test set (per-class share `test_frac`, at least one bag
/// per class), then deals the remaining bags of each class round-robin into
/// `folds` validation folds. Returns one triple per fold.
pub fn stratified_split(ds: &BagDataset, folds: usize, test_frac: f64, seed: u64) -> Result<Vec<Split>> {
    if folds < 2 {
        return Err(MidamError::Argument(format!("folds must be at least 2, got {folds}")));
    }
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(MidamError::Argument(format!("test_frac must lie in (0, 1), got {test_frac}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test = Vec::new();
    let mut fold_members: Vec<Vec<usize>> = vec![Vec::new(); folds];
    let mut dealt = 0;

    for (class, index) in [("positive", ds.pos_index()), ("negative", ds.neg_index())] {
        let mut idx = index.to_vec();
        idx.shuffle(&mut rng);
        let n_test = ((idx.len() as f64) * test_frac).round().max(1.0) as usize;
        if idx.len() < n_test + folds {
            return Err(MidamError::Split(format!(
                "{class} class has {} bags; need {n_test} for test plus at least {folds} for validation folds",
                idx.len()
            )));
        }
        test.extend_from_slice(&idx[..n_test]);
        for &i in &idx[n_test..] {
            fold_members[dealt % folds].push(i);
            dealt += 1;
        }
    }

    test.sort_unstable();
    let test_ds = ds.subset(&test)?;
    (0..folds)
        .map(|k| {
            let mut val = fold_members[k].clone();
            val.sort_unstable();
            let mut train: Vec<usize> = fold_members
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .flat_map(|(_, m)| m.iter().copied())
                .collect();
            train.sort_unstable();
            Ok(Split { train: ds.subset(&train)?, val: ds.subset(&val)?, test: test_ds.clone() })
        })
        .collect()
}

/// Per-feature z-scoring fit on one dataset (normally the training split).
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(ds: &BagDataset) -> Self {
        let d = ds.dim();
        let n = ds.n_instances() as f64;
        let mut mean = vec![0.0; d];
        for row in ds.bags().iter().flat_map(Bag::instances) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in ds.bags().iter().flat_map(Bag::instances) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        // constant features map to zero
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, ds: &BagDataset) -> BagDataset {
        let mut out = ds.clone();
        for bag in &mut out.bags {
            for row in bag.features_mut().chunks_exact_mut(self.mean.len()) {
                for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                    *v = (*v - m) / s;
                }
            }
        }
        out
    }
}
