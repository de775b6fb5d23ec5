//! Plain-text checkpoints of model parameters and, optionally, the tracked
//! pooling estimates.
//!
//! ```text
//! midam-checkpoint 1
//! epoch 12
//! pool smx:0.1
//! gamma0 0.9
//! tensor W1 5 5
//! <5 rows of 5 space-separated values>
//! tensor b1 1 5
//! ...
//! tensor alpha 1 1
//! 0.0731
//! tensor pool_state 92 1
//! <one row per bag>
//! tensor pool_visited 92 1
//! <1 or 0 per bag>
//! ```
//!
//! Values use the shortest representation that parses back to the same
//! `f64`, so a save/load round trip is exact.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{MidamError, Result};
use crate::model::{ModelParams, Weights};
use crate::pooling::{InnerValue, PoolKind};
use crate::vrsp::PoolState;

const MAGIC: &str = "midam-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub kind: PoolKind,
    pub params: ModelParams,
    pub pool_state: Option<PoolState>,
}

struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

fn write_tensor<W: Write>(out: &mut W, name: &str, rows: usize, cols: usize, data: &[f64]) -> std::io::Result<()> {
    writeln!(out, "tensor {name} {rows} {cols}")?;
    for row in data.chunks(cols.max(1)) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

impl Checkpoint {
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let w = &self.params.weights;
        let (d, m) = (w.dim, w.att_dim);
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "epoch {}", self.epoch)?;
        writeln!(out, "pool {}", self.kind)?;
        write_tensor(&mut out, "W1", d, d, &w.w1)?;
        write_tensor(&mut out, "b1", 1, d, &w.b1)?;
        write_tensor(&mut out, "w_c", 1, d, &w.wc)?;
        write_tensor(&mut out, "c0", 1, 1, &[w.c0])?;
        write_tensor(&mut out, "V", m, d, &w.v)?;
        write_tensor(&mut out, "w_a", 1, m, &w.wa)?;
        write_tensor(&mut out, "a", 1, 1, &[self.params.a])?;
        write_tensor(&mut out, "b", 1, 1, &[self.params.b])?;
        write_tensor(&mut out, "alpha", 1, 1, &[self.params.alpha])?;
        if let Some(ps) = &self.pool_state {
            writeln!(out, "gamma0 {}", ps.gamma0())?;
            let width = InnerValue::zero_for(ps.kind())?.components().len();
            let flat: Vec<f64> = ps.slots().iter().flat_map(|s| s.components()).collect();
            write_tensor(&mut out, "pool_state", ps.len(), width, &flat)?;
            let visited: Vec<f64> =
                (0..ps.len()).map(|i| if ps.visited(i).unwrap_or(false) { 1.0 } else { 0.0 }).collect();
            write_tensor(&mut out, "pool_visited", ps.len(), 1, &visited)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines().enumerate();
        let mut next = |what: &str| -> Result<(u64, String)> {
            match lines.next() {
                Some((i, line)) => Ok((i as u64 + 1, line?)),
                None => Err(MidamError::Parse { line: 0, msg: format!("unexpected end of file, expected {what}") }),
            }
        };
        let (_, magic) = next("header")?;
        if magic.trim() != MAGIC {
            return Err(MidamError::Parse { line: 1, msg: format!("not a checkpoint: {magic:?}") });
        }

        let mut meta: HashMap<String, (u64, String)> = HashMap::new();
        let mut tensors: HashMap<String, Tensor> = HashMap::new();
        loop {
            let (line_no, line) = match next("") {
                Ok(l) => l,
                Err(MidamError::Parse { line: 0, .. }) => break,
                Err(e) => return Err(e),
            };
            let mut parts = line.split_whitespace();
            let Some(key) = parts.next() else { continue };
            if key != "tensor" {
                let value = parts.collect::<Vec<_>>().join(" ");
                meta.insert(key.to_string(), (line_no, value));
                continue;
            }
            let bad = |msg: String| MidamError::Parse { line: line_no, msg };
            let name = parts.next().ok_or_else(|| bad("tensor line without a name".into()))?.to_string();
            let mut dim = || -> Result<usize> {
                parts.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad(format!("bad shape for tensor {name}")))
            };
            let (rows, cols) = (dim()?, dim()?);
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (row_no, row) = next(&format!("a row of tensor {name}"))?;
                let before = data.len();
                for tok in row.split_whitespace() {
                    let v: f64 = tok
                        .parse()
                        .map_err(|_| MidamError::Parse { line: row_no, msg: format!("bad number {tok:?}") })?;
                    data.push(v);
                }
                if data.len() - before != cols {
                    return Err(MidamError::Parse {
                        line: row_no,
                        msg: format!("tensor {name} expects {cols} values per row, got {}", data.len() - before),
                    });
                }
            }
            tensors.insert(name, Tensor { rows, cols, data });
        }

        let meta_value = |key: &str| -> Result<&(u64, String)> {
            meta.get(key).ok_or_else(|| MidamError::Parse { line: 0, msg: format!("missing {key:?} entry") })
        };
        let (line, epoch) = meta_value("epoch")?;
        let epoch = epoch.parse().map_err(|_| MidamError::Parse { line: *line, msg: "bad epoch".into() })?;
        let (_, kind) = meta_value("pool")?;
        let kind: PoolKind = kind.parse()?;

        let mut take = |name: &str, rows: Option<usize>, cols: Option<usize>| -> Result<Tensor> {
            let t = tensors
                .remove(name)
                .ok_or_else(|| MidamError::Parse { line: 0, msg: format!("missing tensor {name}") })?;
            if rows.is_some_and(|r| r != t.rows) || cols.is_some_and(|c| c != t.cols) {
                return Err(MidamError::Parse { line: 0, msg: format!("tensor {name} has shape {}x{}", t.rows, t.cols) });
            }
            Ok(t)
        };
        let w1 = take("W1", None, None)?;
        let d = w1.rows;
        if d == 0 || w1.cols != d {
            return Err(MidamError::Parse { line: 0, msg: "W1 must be square and nonempty".into() });
        }
        let b1 = take("b1", Some(1), Some(d))?;
        let wc = take("w_c", Some(1), Some(d))?;
        let c0 = take("c0", Some(1), Some(1))?;
        let v = take("V", None, Some(d))?;
        let m = v.rows;
        let wa = take("w_a", Some(1), Some(m))?;
        let scalar = |t: Tensor| t.data[0];
        let a = scalar(take("a", Some(1), Some(1))?);
        let b = scalar(take("b", Some(1), Some(1))?);
        let alpha = scalar(take("alpha", Some(1), Some(1))?);
        let weights =
            Weights { dim: d, att_dim: m, w1: w1.data, b1: b1.data, wc: wc.data, c0: c0.data[0], v: v.data, wa: wa.data };
        let params = ModelParams { weights, a, b, alpha };

        let pool_state = match take("pool_state", None, None) {
            Err(_) => None,
            Ok(slots) => {
                let visited = take("pool_visited", Some(slots.rows), Some(1))?;
                let (line, g) = meta_value("gamma0")?;
                let gamma0 = g.parse().map_err(|_| MidamError::Parse { line: *line, msg: "bad gamma0".into() })?;
                let values = slots
                    .data
                    .chunks(slots.cols.max(1))
                    .map(|row| match *row {
                        [s] => Ok(InnerValue::Scalar(s)),
                        [s1, s2] => Ok(InnerValue::Pair(s1, s2)),
                        _ => Err(MidamError::Parse { line: 0, msg: "pool_state rows need 1 or 2 values".into() }),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let visited = visited.data.iter().map(|&v| v != 0.0).collect();
                Some(PoolState::from_parts(kind, gamma0, values, visited)?)
            }
        };
        Ok(Self { epoch, kind, params, pool_state })
    }
}
