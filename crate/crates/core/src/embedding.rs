//! Embedding files in word2vec text format: a header `N k`, then one line
//! per node, `id v1 .. vk`, with nine significant digits.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::graph::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    dim: usize,
    ids: Vec<NodeId>,
    data: Vec<f64>,
    index: HashMap<NodeId, usize>,
}

impl Embeddings {
    pub fn new(dim: usize, ids: Vec<NodeId>, data: Vec<f64>) -> Result<Self> {
        if data.len() != ids.len() * dim {
            return Err(Error::Shape(format!(
                "{} values for {} rows of dimension {dim}",
                data.len(),
                ids.len()
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (row, &id) in ids.iter().enumerate() {
            if index.insert(id, row).is_some() {
                return Err(Error::Shape(format!("node {id} appears twice")));
            }
        }
        Ok(Embeddings { dim, ids, data, index })
    }

    /// Rows `0..n` of a node-major table, labelled with `ids` (row `i`
    /// belongs to node `ids[i]`).
    pub fn from_table(dim: usize, table: &[f64], ids: &[NodeId]) -> Result<Self> {
        Self::new(dim, ids.to_vec(), table.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn get(&self, v: NodeId) -> Option<&[f64]> {
        self.index.get(&v).map(|&r| &self.data[r * self.dim..(r + 1) * self.dim])
    }

    /// Appends the rows of `other`, which must share the dimension and
    /// hold no node already present.
    pub fn extend(&mut self, other: &Embeddings) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::Shape(format!("cannot merge dimension {} into {}", other.dim, self.dim)));
        }
        for (row, &id) in other.ids.iter().enumerate() {
            if self.index.insert(id, self.ids.len()).is_some() {
                return Err(Error::Shape(format!("node {id} appears twice")));
            }
            self.ids.push(id);
            self.data.extend_from_slice(&other.data[row * other.dim..(row + 1) * other.dim]);
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.ids.len(), self.dim)?;
        let mut line = String::new();
        for (row, id) in self.ids.iter().enumerate() {
            line.clear();
            line.push_str(&id.to_string());
            for v in &self.data[row * self.dim..(row + 1) * self.dim] {
                line.push(' ');
                line.push_str(&format!("{v:.8e}"));
            }
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::parse(1, "empty embedding file"))??;
        let mut it = header.split_whitespace().map(str::parse::<usize>);
        let (Some(Ok(n)), Some(Ok(dim)), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::parse(1, "header must be `N k`"));
        };
        let mut ids = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * dim);
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut toks = line.split_whitespace();
            let id: NodeId = toks
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::parse(lineno, "bad node id"))?;
            let before = data.len();
            for t in toks {
                data.push(t.parse::<f64>().map_err(|_| Error::parse(lineno, format!("bad value {t:?}")))?);
            }
            if data.len() - before != dim {
                return Err(Error::parse(
                    lineno,
                    format!("expected {dim} values, found {}", data.len() - before),
                ));
            }
            ids.push(id);
        }
        if ids.len() != n {
            return Err(Error::parse(1, format!("header announces {n} rows, found {}", ids.len())));
        }
        Self::new(dim, ids, data)
    }
}

/// File name of the snapshot written after `epoch` (1-based).
pub fn snapshot_name(epoch: usize) -> String {
    format!("epoch_{epoch:03}.emb")
}

/// Parses an epoch number back out of a snapshot file name.
pub fn parse_snapshot_name(name: &str) -> Option<usize> {
    name.strip_prefix("epoch_")?.strip_suffix(".emb")?.parse().ok()
}
