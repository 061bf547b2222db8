//! Train/validation/test splits and their text format.
//!
//! ```text
//! # protocol=citation
//! split 0
//! train: 3 17 ...
//! val: ...
//! test: ...
//! ```

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{LabelTable, NodeId};
use crate::rng::{keyed_rng, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    /// A fraction of labeled nodes trains, the rest tests; epochs are
    /// selected by cross-validation on the training part.
    Fraction,
    /// A fixed number of nodes per class trains; epochs are selected on a
    /// validation set.
    Citation,
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fraction" => Ok(Protocol::Fraction),
            "citation" => Ok(Protocol::Citation),
            _ => Err(Error::Config(format!("unknown protocol {s:?} (fraction|citation)"))),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Fraction => "fraction",
            Protocol::Citation => "citation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalSplit {
    pub protocol: Protocol,
    pub train: Vec<NodeId>,
    pub val: Vec<NodeId>,
    pub test: Vec<NodeId>,
}

impl EvalSplit {
    pub fn is_disjoint(&self) -> bool {
        let mut seen = HashSet::new();
        self.train.iter().chain(&self.val).chain(&self.test).all(|v| seen.insert(*v))
    }
}

/// `repeats` random splits using `gamma` of the labeled nodes for training
/// and the rest for testing.
pub fn make_fraction_splits(
    labels: &LabelTable,
    gamma: f64,
    repeats: usize,
    seed: u64,
) -> Result<Vec<EvalSplit>> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("training fraction {gamma} must lie in (0, 1)")));
    }
    let labeled = labels.labeled_nodes();
    let n_train = (gamma * labeled.len() as f64 + 1e-9).floor() as usize;
    if n_train < 1 {
        return Err(Error::Config(format!(
            "fraction {gamma} of {} labeled nodes leaves no training node",
            labeled.len()
        )));
    }
    if n_train >= labeled.len() {
        return Err(Error::Config(format!(
            "fraction {gamma} of {} labeled nodes leaves no test node",
            labeled.len()
        )));
    }
    Ok((0..repeats)
        .map(|r| {
            let mut order = labeled.clone();
            order.shuffle(&mut keyed_rng(seed, Domain::Split, 0, r as u64));
            let test = order.split_off(n_train);
            EvalSplit { protocol: Protocol::Fraction, train: order, val: Vec::new(), test }
        })
        .collect())
}

/// `repeats` splits with `per_class` training nodes of every class, then
/// `n_val` validation and `n_test` test nodes from the remainder.
pub fn make_citation_splits(
    labels: &LabelTable,
    per_class: usize,
    n_val: usize,
    n_test: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<EvalSplit>> {
    let labeled = labels.labeled_nodes();
    for class in 0..labels.num_classes() as u32 {
        let available = labeled.iter().filter(|&&v| labels.labels(v).contains(&class)).count();
        if available < per_class {
            return Err(Error::InsufficientNodes { class: class as usize, available, required: per_class });
        }
    }
    let needed = per_class * labels.num_classes() + n_val + n_test;
    if labeled.len() < needed {
        return Err(Error::Config(format!(
            "{} labeled nodes cannot fill {} training, {n_val} validation and {n_test} test nodes",
            labeled.len(),
            per_class * labels.num_classes()
        )));
    }
    let mut splits = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let mut order = labeled.clone();
        order.shuffle(&mut keyed_rng(seed, Domain::Split, 1, r as u64));
        let mut taken = vec![0usize; labels.num_classes()];
        let mut train = Vec::new();
        let mut rest = Vec::new();
        for &v in &order {
            // a node trains for the first of its classes that still needs one
            match labels.labels(v).iter().find(|&&c| taken[c as usize] < per_class) {
                Some(&c) => {
                    taken[c as usize] += 1;
                    train.push(v);
                }
                None => rest.push(v),
            }
        }
        if let Some(class) = taken.iter().position(|&t| t < per_class) {
            // multi-label overlap can starve a class even when enough nodes carry it
            return Err(Error::InsufficientNodes { class, available: taken[class], required: per_class });
        }
        if rest.len() < n_val + n_test {
            return Err(Error::Config(format!(
                "only {} nodes remain for {n_val} validation and {n_test} test nodes",
                rest.len()
            )));
        }
        let val = rest[..n_val].to_vec();
        let test = rest[n_val..n_val + n_test].to_vec();
        splits.push(EvalSplit { protocol: Protocol::Citation, train, val, test });
    }
    Ok(splits)
}

fn write_ids<W: Write>(out: &mut W, tag: &str, ids: &[NodeId]) -> Result<()> {
    write!(out, "{tag}:")?;
    for v in ids {
        write!(out, " {v}")?;
    }
    writeln!(out)?;
    Ok(())
}

pub fn write_splits<W: Write>(splits: &[EvalSplit], mut out: W) -> Result<()> {
    let protocol = splits.first().map_or(Protocol::Citation, |s| s.protocol);
    writeln!(out, "# protocol={protocol}")?;
    for (i, s) in splits.iter().enumerate() {
        writeln!(out, "split {i}")?;
        write_ids(&mut out, "train", &s.train)?;
        write_ids(&mut out, "val", &s.val)?;
        write_ids(&mut out, "test", &s.test)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_splits<R: BufRead>(input: R) -> Result<Vec<EvalSplit>> {
    let mut protocol = Protocol::Citation;
    let mut splits: Vec<EvalSplit> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(p) = comment.trim().strip_prefix("protocol=") {
                protocol = p.parse().map_err(|_| Error::parse(lineno, format!("bad protocol {p:?}")))?;
            }
            continue;
        }
        if line.starts_with("split") {
            splits.push(EvalSplit { protocol, train: Vec::new(), val: Vec::new(), test: Vec::new() });
            continue;
        }
        let (tag, ids) = line
            .split_once(':')
            .ok_or_else(|| Error::parse(lineno, "expected `train:`, `val:` or `test:`"))?;
        let ids = ids
            .split_whitespace()
            .map(|t| t.parse::<NodeId>().map_err(|_| Error::parse(lineno, format!("bad node id {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let split =
            splits.last_mut().ok_or_else(|| Error::parse(lineno, "ids before the first `split` line"))?;
        match tag.trim() {
            "train" => split.train = ids,
            "val" => split.val = ids,
            "test" => split.test = ids,
            other => return Err(Error::parse(lineno, format!("unknown section {other:?}"))),
        }
    }
    for (i, s) in splits.iter().enumerate() {
        if !s.is_disjoint() {
            return Err(Error::Config(format!("split {i} reuses a node across sections")));
        }
    }
    Ok(splits)
}
