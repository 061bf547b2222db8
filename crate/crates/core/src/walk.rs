//! Uniform random walks and (context, target) pair extraction.
//!
//! Walk `w` of start node `v` is drawn from its own keyed stream, so the
//! corpus is identical whether walks are produced sequentially, in
//! parallel, streamed through a channel, or reloaded from a corpus file.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::mpsc::{sync_channel, Receiver};
use std::sync::Arc;
use std::thread;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::{keyed_rng, Domain};

/// Which walk positions become targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetStrategy {
    /// One uniformly chosen position per walk.
    RandomOne,
    /// Every position once.
    RotateAll,
    /// The listed 0-based positions.
    FixedIndexes(Vec<usize>),
}

impl FromStr for TargetStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(TargetStrategy::RandomOne),
            "rotate" => Ok(TargetStrategy::RotateAll),
            _ => {
                let list = s.strip_prefix("idx:").ok_or_else(|| {
                    Error::Config(format!("unknown target strategy {s:?} (random|rotate|idx:i,j,..)"))
                })?;
                let idx = list
                    .split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<usize>()
                            .map_err(|_| Error::Config(format!("bad target index {t:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(TargetStrategy::FixedIndexes(idx))
            }
        }
    }
}

impl fmt::Display for TargetStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetStrategy::RandomOne => f.write_str("random"),
            TargetStrategy::RotateAll => f.write_str("rotate"),
            TargetStrategy::FixedIndexes(idx) => {
                let list: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
                write!(f, "idx:{}", list.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub targets: TargetStrategy,
    pub seed: u64,
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walk_length < 2 {
            return Err(Error::Config("walk length must be at least 2".into()));
        }
        if self.walks_per_node < 1 {
            return Err(Error::Config("need at least one walk per node".into()));
        }
        if let TargetStrategy::FixedIndexes(idx) = &self.targets {
            if idx.is_empty() {
                return Err(Error::Config("fixed target index list is empty".into()));
            }
            if let Some(bad) = idx.iter().find(|&&i| i >= self.walk_length) {
                return Err(Error::Config(format!(
                    "target index {bad} outside walk of length {}",
                    self.walk_length
                )));
            }
        }
        Ok(())
    }

    pub fn pairs_per_walk(&self) -> usize {
        match &self.targets {
            TargetStrategy::RandomOne => 1,
            TargetStrategy::RotateAll => self.walk_length,
            TargetStrategy::FixedIndexes(idx) => idx.len(),
        }
    }
}

/// A target node and its `q - 1` context nodes in walk order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextPair {
    pub target: NodeId,
    pub context: Vec<NodeId>,
}

/// Draws walk number `walk_index` from `start`. An isolated start node
/// yields a walk that repeats it.
pub fn sample_walk(
    graph: &Graph,
    start: NodeId,
    walk_index: usize,
    walk_length: usize,
    seed: u64,
) -> Vec<NodeId> {
    let mut rng = keyed_rng(seed, Domain::Walk, start as u64, walk_index as u64);
    walk_from(graph, start, walk_length, &mut rng)
}

/// A uniform walk of `walk_length` nodes from `start` driven by `rng`.
pub fn walk_from<R: Rng + ?Sized>(
    graph: &Graph,
    start: NodeId,
    walk_length: usize,
    rng: &mut R,
) -> Vec<NodeId> {
    let mut walk = Vec::with_capacity(walk_length);
    walk.push(start);
    let mut cur = start;
    for _ in 1..walk_length {
        let nb = graph.neighbors(cur);
        if !nb.is_empty() {
            cur = nb[rng.gen_range(0..nb.len())];
        }
        walk.push(cur);
    }
    walk
}

/// Flat storage of `walks_per_node` walks for every node, node-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    walk_length: usize,
    walks_per_node: usize,
    seed: u64,
    nodes: Vec<NodeId>,
}

impl Corpus {
    pub fn walk_length(&self) -> usize {
        self.walk_length
    }

    pub fn walks_per_node(&self) -> usize {
        self.walks_per_node
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_walks(&self) -> usize {
        self.nodes.len() / self.walk_length
    }

    pub fn walk(&self, i: usize) -> &[NodeId] {
        &self.nodes[i * self.walk_length..(i + 1) * self.walk_length]
    }

    pub fn walks(&self) -> impl Iterator<Item = &[NodeId]> {
        self.nodes.chunks_exact(self.walk_length)
    }

    /// Visit count of every node over the whole corpus.
    pub fn visit_counts(&self, num_nodes: usize) -> Vec<u64> {
        let mut counts = vec![0u64; num_nodes];
        for &v in &self.nodes {
            counts[v as usize] += 1;
        }
        counts
    }

    /// Writes the `q=<q> T=<T> seed=<s>` header and one walk per line.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "q={} T={} seed={}", self.walk_length, self.walks_per_node, self.seed)?;
        let mut line = String::new();
        for walk in self.walks() {
            line.clear();
            for (j, v) in walk.iter().enumerate() {
                if j > 0 {
                    line.push(' ');
                }
                line.push_str(&v.to_string());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Corpus> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::parse(1, "empty corpus file"))??;
        let mut q = None;
        let mut t = None;
        let mut seed = None;
        for tok in header.split_whitespace() {
            let (key, val) =
                tok.split_once('=').ok_or_else(|| Error::parse(1, format!("bad header field {tok:?}")))?;
            let val: u64 = val.parse().map_err(|_| Error::parse(1, format!("bad header value {tok:?}")))?;
            match key {
                "q" => q = Some(val as usize),
                "T" => t = Some(val as usize),
                "seed" => seed = Some(val),
                _ => return Err(Error::parse(1, format!("unknown header field {key:?}"))),
            }
        }
        let (Some(q), Some(t), Some(seed)) = (q, t, seed) else {
            return Err(Error::parse(1, "header must be `q=<q> T=<T> seed=<s>`"));
        };
        let mut nodes = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = nodes.len();
            for tok in line.split_whitespace() {
                nodes.push(
                    tok.parse::<NodeId>()
                        .map_err(|_| Error::parse(line_no, format!("bad node id {tok:?}")))?,
                );
            }
            if nodes.len() - before != q {
                return Err(Error::parse(line_no, format!("walk length differs from q={q}")));
            }
        }
        Ok(Corpus { walk_length: q, walks_per_node: t, seed, nodes })
    }
}

fn node_walks(graph: &Graph, v: NodeId, cfg: &WalkConfig) -> Vec<NodeId> {
    if graph.degree(v) == 0 {
        log::warn!("node {v} is isolated; its walks repeat the start node");
    }
    let mut out = Vec::with_capacity(cfg.walks_per_node * cfg.walk_length);
    for w in 0..cfg.walks_per_node {
        out.extend(sample_walk(graph, v, w, cfg.walk_length, cfg.seed));
    }
    out
}

/// Samples `walks_per_node` walks of length `walk_length` from every node.
/// Walk `v * walks_per_node + w` is the `w`-th walk of node `v`.
pub fn sample_walks(graph: &Graph, cfg: &WalkConfig) -> Result<Corpus> {
    cfg.validate()?;
    let per_node: Vec<Vec<NodeId>> =
        (0..graph.num_nodes() as NodeId).into_par_iter().map(|v| node_walks(graph, v, cfg)).collect();
    Ok(Corpus {
        walk_length: cfg.walk_length,
        walks_per_node: cfg.walks_per_node,
        seed: cfg.seed,
        nodes: per_node.concat(),
    })
}

/// All walks of one start node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeWalks {
    pub start: NodeId,
    pub walks: Vec<Vec<NodeId>>,
}

/// Produces walks on a background thread into a bounded channel holding at
/// most `capacity` nodes' worth of walks. Nodes arrive in id order.
pub fn stream_walks(graph: Arc<Graph>, cfg: WalkConfig, capacity: usize) -> Result<Receiver<NodeWalks>> {
    cfg.validate()?;
    let (tx, rx) = sync_channel(capacity.max(1));
    thread::spawn(move || {
        for v in 0..graph.num_nodes() as NodeId {
            let flat = node_walks(&graph, v, &cfg);
            let walks = flat.chunks(cfg.walk_length).map(<[_]>::to_vec).collect();
            if tx.send(NodeWalks { start: v, walks }).is_err() {
                break;
            }
        }
    });
    Ok(rx)
}

/// Target positions selected in walk `walk_id` under `cfg.targets`.
pub fn target_positions(walk_id: usize, cfg: &WalkConfig) -> Vec<usize> {
    match &cfg.targets {
        TargetStrategy::RandomOne => {
            let mut rng = keyed_rng(cfg.seed, Domain::Target, 0, walk_id as u64);
            vec![rng.gen_range(0..cfg.walk_length)]
        }
        TargetStrategy::RotateAll => (0..cfg.walk_length).collect(),
        TargetStrategy::FixedIndexes(idx) => idx.clone(),
    }
}

/// The pair with `walk[position]` as target and the other nodes, in walk
/// order, as context.
pub fn pair_at(walk: &[NodeId], position: usize) -> ContextPair {
    let mut context = Vec::with_capacity(walk.len() - 1);
    context.extend_from_slice(&walk[..position]);
    context.extend_from_slice(&walk[position + 1..]);
    ContextPair { target: walk[position], context }
}

/// Pairs of walk number `walk_id` (its index in the corpus).
pub fn extract_pairs(walk: &[NodeId], walk_id: usize, cfg: &WalkConfig) -> Result<Vec<ContextPair>> {
    if walk.len() != cfg.walk_length {
        return Err(Error::Shape(format!("walk of length {} for q={}", walk.len(), cfg.walk_length)));
    }
    Ok(target_positions(walk_id, cfg).into_iter().map(|p| pair_at(walk, p)).collect())
}

/// Compact handle to one training pair: a walk index and a target position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairSlot {
    pub walk: u32,
    pub position: u16,
}

/// Every pair slot of the corpus, in walk order.
pub fn pair_slots(corpus: &Corpus, cfg: &WalkConfig) -> Result<Vec<PairSlot>> {
    cfg.validate()?;
    if corpus.walk_length() != cfg.walk_length {
        return Err(Error::Config(format!(
            "corpus has q={}, configuration q={}",
            corpus.walk_length(),
            cfg.walk_length
        )));
    }
    let mut slots = Vec::with_capacity(corpus.num_walks() * cfg.pairs_per_walk());
    for w in 0..corpus.num_walks() {
        for p in target_positions(w, cfg) {
            slots.push(PairSlot { walk: w as u32, position: p as u16 });
        }
    }
    Ok(slots)
}
