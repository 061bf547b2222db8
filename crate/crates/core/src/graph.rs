//! Graphs, node features and node labels, plus their plain-text formats.
//!
//! Edge lists are whitespace-separated integer pairs, one per line, with an
//! optional `#nodes N` header; other `#` lines are comments. Every edge is
//! stored in both directions.
//!
//! Features are sparse triplets `node feature_index value` expanded into a
//! dense row per node. Labels are `node l1,l2,...` lines.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{keyed_rng, Domain};

pub type NodeId = u32;

/// Undirected graph in compressed adjacency form.
///
/// Node ids are dense in `[0, num_nodes)`. Each adjacency list is sorted,
/// free of duplicates and self-loops, and symmetric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<NodeId>,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Duplicate edges (in
    /// either orientation) collapse to one.
    pub fn from_edges(num_nodes: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let mut degree = vec![0usize; num_nodes];
        for &(u, v) in edges {
            if u == v {
                return Err(Error::Config(format!("self-loop on node {u}")));
            }
            for w in [u, v] {
                if w as usize >= num_nodes {
                    return Err(Error::Config(format!("node {w} out of range for {num_nodes} nodes")));
                }
            }
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut adj: Vec<Vec<NodeId>> = degree.iter().map(|&d| Vec::with_capacity(d)).collect();
        for &(u, v) in edges {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        let mut neighbors = Vec::with_capacity(edges.len() * 2);
        offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend_from_slice(&list);
            offsets.push(neighbors.len());
        }
        Ok(Graph { offsets, neighbors })
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        let v = v as usize;
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.neighbors(v).len()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        (u as usize) < self.num_nodes() && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.num_nodes() as NodeId)
            .flat_map(move |u| self.neighbors(u).iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    /// Subgraph induced by the nodes with `keep[v] == true`, with ids
    /// renumbered densely in increasing original order. Returns the new graph
    /// and the original id of every new node.
    pub fn induced_subgraph(&self, keep: &[bool]) -> Result<(Graph, Vec<NodeId>)> {
        if keep.len() != self.num_nodes() {
            return Err(Error::Shape(format!(
                "keep mask has {} entries for {} nodes",
                keep.len(),
                self.num_nodes()
            )));
        }
        let mut new_id = vec![NodeId::MAX; keep.len()];
        let mut original = Vec::new();
        for (v, &k) in keep.iter().enumerate() {
            if k {
                new_id[v] = original.len() as NodeId;
                original.push(v as NodeId);
            }
        }
        let edges: Vec<_> = self
            .edges()
            .filter(|&(u, v)| keep[u as usize] && keep[v as usize])
            .map(|(u, v)| (new_id[u as usize], new_id[v as usize]))
            .collect();
        Ok((Graph::from_edges(original.len(), &edges)?, original))
    }

    /// Writes the `#nodes N` header followed by each undirected edge once.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "#nodes {}", self.num_nodes())?;
        for (u, v) in self.edges() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }
}

fn parse_id(tok: &str, line: usize) -> Result<NodeId> {
    tok.parse::<NodeId>()
        .map_err(|_| Error::parse(line, format!("expected a non-negative node id, got {tok:?}")))
}

/// Parses an edge list into an undirected graph.
pub fn load_edge_list<R: BufRead>(input: R) -> Result<Graph> {
    let mut declared: Option<usize> = None;
    let mut edges = Vec::new();
    let mut max_id: Option<NodeId> = None;
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            let mut toks = comment.split_whitespace();
            if toks.next() == Some("nodes") {
                let n = toks
                    .next()
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| Error::parse(line_no, "malformed #nodes header"))?;
                declared = Some(n);
            }
            continue;
        }
        let mut toks = trimmed.split_whitespace();
        let (Some(a), Some(b), None) = (toks.next(), toks.next(), toks.next()) else {
            return Err(Error::parse(line_no, "expected exactly two node ids"));
        };
        let u = parse_id(a, line_no)?;
        let v = parse_id(b, line_no)?;
        if u == v {
            return Err(Error::SelfLoop { line: line_no, node: u });
        }
        if let Some(n) = declared {
            if u.max(v) as usize >= n {
                return Err(Error::parse(
                    line_no,
                    format!("node id {} exceeds declared #nodes {n}", u.max(v)),
                ));
            }
        }
        max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
        edges.push((u, v));
    }
    let seen = max_id.map_or(0, |m| m as usize + 1);
    let num_nodes = declared.map_or(seen, |n| n.max(seen));
    Graph::from_edges(num_nodes, &edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSource {
    GivenFixed,
    Learned,
}

/// One dense `dim`-vector per node, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    data: Vec<f64>,
    source: FeatureSource,
}

impl FeatureTable {
    pub fn from_rows(dim: usize, data: Vec<f64>, source: FeatureSource) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!("{} values do not form rows of length {dim}", data.len())));
        }
        Ok(FeatureTable { dim, data, source })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn source(&self) -> FeatureSource {
        self.source
    }

    pub fn is_learned(&self) -> bool {
        self.source == FeatureSource::Learned
    }

    pub fn row(&self, v: NodeId) -> &[f64] {
        let start = v as usize * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the values; `None` for fixed input features.
    pub fn values_mut(&mut self) -> Option<&mut [f64]> {
        match self.source {
            FeatureSource::Learned => Some(&mut self.data),
            FeatureSource::GivenFixed => None,
        }
    }

    /// A new table holding the given rows, in order.
    pub fn select_rows(&self, ids: &[NodeId]) -> FeatureTable {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &v in ids {
            data.extend_from_slice(self.row(v));
        }
        FeatureTable { dim: self.dim, data, source: self.source }
    }
}

/// Reads sparse `node feature_index value` triplets into a fixed table with
/// `num_nodes` rows. A repeated `(node, feature_index)` keeps the last value.
pub fn load_features<R: BufRead>(input: R, num_nodes: usize, dim: usize) -> Result<FeatureTable> {
    if dim == 0 {
        return Err(Error::Config("feature dimension must be positive".into()));
    }
    let mut data = vec![0.0; num_nodes * dim];
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::parse(line_no, "expected `node feature_index value`"));
        }
        let node = parse_id(toks[0], line_no)? as usize;
        let feat: usize =
            toks[1].parse().map_err(|_| Error::parse(line_no, format!("bad feature index {:?}", toks[1])))?;
        let value: f64 =
            toks[2].parse().map_err(|_| Error::parse(line_no, format!("bad value {:?}", toks[2])))?;
        if node >= num_nodes {
            return Err(Error::parse(line_no, format!("node {node} out of range for {num_nodes} nodes")));
        }
        if feat >= dim {
            return Err(Error::parse(
                line_no,
                format!("feature index {feat} out of range for dimension {dim}"),
            ));
        }
        if !value.is_finite() {
            return Err(Error::parse(line_no, "non-finite feature value"));
        }
        data[node * dim + feat] = value;
    }
    FeatureTable::from_rows(dim, data, FeatureSource::GivenFixed)
}

/// Trainable features drawn i.i.d. uniform on `[-sqrt(6/d), sqrt(6/d)]`.
pub fn init_learned_features(num_nodes: usize, dim: usize, seed: u64) -> Result<FeatureTable> {
    if dim == 0 {
        return Err(Error::Config("feature dimension must be positive".into()));
    }
    let bound = (6.0 / dim as f64).sqrt();
    let mut rng = keyed_rng(seed, Domain::Init, 0, 0);
    let data = (0..num_nodes * dim).map(|_| rng.gen_range(-bound..=bound)).collect();
    Ok(FeatureTable { dim, data, source: FeatureSource::Learned })
}

/// Per-node label sets. Nodes without a line in the label file (or beyond
/// the last labeled id) are unlabeled.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelTable {
    num_classes: usize,
    labels: Vec<Vec<u32>>,
}

impl LabelTable {
    /// Builds a table from `(node, labels)` entries. Label sets are sorted
    /// and deduplicated; an empty set marks the node unlabeled.
    pub fn new(num_classes: usize, entries: Vec<(NodeId, Vec<u32>)>) -> Result<Self> {
        let len = entries.iter().map(|(v, _)| *v as usize + 1).max().unwrap_or(0);
        let mut labels = vec![Vec::new(); len];
        for (v, mut set) in entries {
            if let Some(&bad) = set.iter().find(|&&l| l as usize >= num_classes) {
                return Err(Error::Config(format!(
                    "label {bad} on node {v} out of range for {num_classes} classes"
                )));
            }
            set.sort_unstable();
            set.dedup();
            labels[v as usize] = set;
        }
        Ok(LabelTable { num_classes, labels })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Labels of `v`; empty when unlabeled.
    pub fn labels(&self, v: NodeId) -> &[u32] {
        self.labels.get(v as usize).map_or(&[], |l| l.as_slice())
    }

    pub fn is_labeled(&self, v: NodeId) -> bool {
        !self.labels(v).is_empty()
    }

    pub fn labeled_nodes(&self) -> Vec<NodeId> {
        (0..self.labels.len() as NodeId).filter(|&v| self.is_labeled(v)).collect()
    }

    pub fn is_multi_label(&self) -> bool {
        self.labels.iter().any(|l| l.len() > 1)
    }
}

/// Parses `node label[,label...]` lines. `num_classes` is one past the
/// largest label id seen.
pub fn load_labels<R: BufRead>(input: R) -> Result<LabelTable> {
    let mut entries: Vec<(NodeId, Vec<u32>)> = Vec::new();
    let mut seen: HashMap<NodeId, usize> = HashMap::new();
    let mut num_classes = 0usize;
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut toks = trimmed.split_whitespace();
        let node = parse_id(toks.next().unwrap_or_default(), line_no)?;
        let rest: Vec<&str> = toks.collect();
        if rest.is_empty() {
            return Err(Error::parse(line_no, "node without labels"));
        }
        let mut set = Vec::new();
        for tok in rest.join(",").split(',').filter(|t| !t.is_empty()) {
            let l: u32 = tok.parse().map_err(|_| Error::parse(line_no, format!("bad label {tok:?}")))?;
            num_classes = num_classes.max(l as usize + 1);
            set.push(l);
        }
        if let Some(first) = seen.insert(node, line_no) {
            return Err(Error::parse(
                line_no,
                format!("duplicate labels for node {node} (first on line {first})"),
            ));
        }
        entries.push((node, set));
    }
    LabelTable::new(num_classes, entries)
}

/// Optional mapping between string node names and dense ids, read from
/// `name<TAB>id` lines.
#[derive(Debug, Clone, Default)]
pub struct NameMap {
    by_name: HashMap<String, NodeId>,
    by_id: HashMap<NodeId, String>,
}

impl NameMap {
    pub fn id(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: NodeId) -> Option<&str> {
        self.by_id.get(&id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }
}

pub fn load_name_map<R: BufRead>(input: R) -> Result<NameMap> {
    let mut map = NameMap::default();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, id) =
            line.rsplit_once('\t').ok_or_else(|| Error::parse(line_no, "expected `name<TAB>id`"))?;
        let id = parse_id(id.trim(), line_no)?;
        if map.by_name.insert(name.to_string(), id).is_some() {
            return Err(Error::parse(line_no, format!("duplicate name {name:?}")));
        }
        if map.by_id.insert(id, name.to_string()).is_some() {
            return Err(Error::parse(line_no, format!("duplicate id {id}")));
        }
    }
    Ok(map)
}
