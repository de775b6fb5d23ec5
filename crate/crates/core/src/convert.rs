//! Readers for common MIL distribution formats. Each produces a
//! [`BagDataset`] that can then be written in the canonical CSV format.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::str::FromStr;

use crate::data::{read_csv, Bag, BagDataset, CsvSchema};
use crate::error::{MidamError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    /// `bag_id,label,features…` (the canonical layout).
    BagLabel,
    /// `label,bag_id,features…`
    LabelBag,
    /// UCI MUSK: `molecule,conformation,f1..f166,class`
    UciMusk,
    /// `instance:bag:label idx:value …` with 1-based feature indices.
    SvmLight,
}

impl FromStr for InputFormat {
    type Err = MidamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bag-label" | "canonical" => Ok(Self::BagLabel),
            "label-bag" => Ok(Self::LabelBag),
            "uci-musk" => Ok(Self::UciMusk),
            "svmlight" | "svm-light" => Ok(Self::SvmLight),
            other => Err(MidamError::Argument(format!(
                "unknown format {other:?} (expected bag-label, label-bag, uci-musk or svmlight)"
            ))),
        }
    }
}

pub fn read_format<R: Read>(reader: R, format: InputFormat, has_header: bool) -> Result<BagDataset> {
    match format {
        InputFormat::BagLabel => read_csv(reader, &CsvSchema { has_header, ..CsvSchema::default() }),
        InputFormat::LabelBag => read_csv(reader, &CsvSchema { has_header, bag_id_col: 1, label_col: 0 }),
        InputFormat::UciMusk => read_uci_musk(reader),
        InputFormat::SvmLight => read_svmlight(reader),
    }
}

/// Groups rows by name, numbering bags in order of first appearance.
#[derive(Default)]
struct Grouper {
    ids: HashMap<String, usize>,
    bags: Vec<(String, bool, Vec<Vec<f64>>)>,
}

impl Grouper {
    fn push(&mut self, line: u64, name: &str, label: bool, row: Vec<f64>) -> Result<()> {
        match self.ids.get(name) {
            Some(&k) => {
                let (_, l, rows) = &mut self.bags[k];
                if *l != label {
                    return Err(MidamError::Integrity(format!("bag {name:?} has conflicting labels (line {line})")));
                }
                rows.push(row);
            }
            None => {
                self.ids.insert(name.to_string(), self.bags.len());
                self.bags.push((name.to_string(), label, vec![row]));
            }
        }
        Ok(())
    }

    fn finish(self, dim: usize) -> Result<BagDataset> {
        if self.bags.is_empty() {
            return Err(MidamError::EmptyDataset);
        }
        let bags = self
            .bags
            .into_iter()
            .enumerate()
            .map(|(k, (_, label, mut rows))| {
                rows.iter_mut().for_each(|r| r.resize(dim, 0.0));
                Bag::new(k as u64, label, rows)
            })
            .collect::<Result<_>>()?;
        BagDataset::new(bags)
    }
}

fn number(line: u64, tok: &str) -> Result<f64> {
    tok.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| MidamError::Parse { line, msg: format!("bad number {tok:?}") })
}

pub fn read_uci_musk<R: Read>(reader: R) -> Result<BagDataset> {
    let mut groups = Grouper::default();
    let mut dim = None;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        let line = line.trim().trim_end_matches('.');
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 4 {
            return Err(MidamError::Parse { line: line_no, msg: format!("expected at least 4 columns, got {}", cols.len()) });
        }
        let label = number(line_no, cols[cols.len() - 1])? > 0.0;
        let features = cols[2..cols.len() - 1].iter().map(|t| number(line_no, t)).collect::<Result<Vec<_>>>()?;
        match dim {
            None => dim = Some(features.len()),
            Some(d) if d != features.len() => {
                return Err(MidamError::Parse { line: line_no, msg: format!("expected {d} features, got {}", features.len()) })
            }
            _ => {}
        }
        groups.push(line_no, cols[0].trim(), label, features)?;
    }
    groups.finish(dim.unwrap_or(0))
}

pub fn read_svmlight<R: Read>(reader: R) -> Result<BagDataset> {
    let mut groups = Grouper::default();
    let mut dim = 0;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| MidamError::Parse { line: line_no, msg };
        let mut tokens = line.split_whitespace();
        let head = tokens.next().unwrap_or("");
        let parts: Vec<&str> = head.split(':').collect();
        let [_, bag, label] = parts[..] else {
            return Err(bad(format!("expected instance:bag:label, got {head:?}")));
        };
        let label = number(line_no, label)? > 0.0;
        let mut row = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| bad(format!("expected index:value, got {tok:?}")))?;
            let idx: usize = idx.parse().ok().filter(|&k| k >= 1).ok_or_else(|| bad(format!("bad feature index {idx:?}")))?;
            if row.len() < idx {
                row.resize(idx, 0.0);
            }
            row[idx - 1] = number(line_no, val)?;
        }
        dim = dim.max(row.len());
        groups.push(line_no, bag, label, row)?;
    }
    if dim == 0 {
        return Err(MidamError::Argument("no features found".into()));
    }
    groups.finish(dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uci_musk_rows() {
        let text = "MUSK-1,1_1,1,2,3,1.\nMUSK-1,1_2,4,5,6,1.\nNON-2,2_1,7,8,9,0.\n";
        let ds = read_uci_musk(text.as_bytes()).unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.n_pos(), ds.n_neg()), (2, 3, 1, 1));
        assert_eq!(ds.bag(0).instance(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn svmlight_rows_are_sparse() {
        let text = "1:a:1 1:0.5 3:2\n2:a:1 2:1\n3:b:-1 1:1 # comment\n";
        let ds = read_svmlight(text.as_bytes()).unwrap();
        assert_eq!(ds.dim(), 3);
        assert_eq!(ds.bag(0).instance(0), &[0.5, 0.0, 2.0]);
        assert_eq!(ds.bag(0).instance(1), &[0.0, 1.0, 0.0]);
        assert!(!ds.bag(1).label);
    }

    #[test]
    fn label_bag_swaps_columns() {
        let ds = read_format("1,7,0.5\n0,8,0.25\n".as_bytes(), InputFormat::LabelBag, false).unwrap();
        assert_eq!(ds.bag(0).id, 7);
        assert!(ds.bag(0).label);
    }

    #[test]
    fn conflicting_labels() {
        let err = read_svmlight("1:a:1 1:1\n2:a:0 1:1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, MidamError::Integrity(_)));
    }
}
