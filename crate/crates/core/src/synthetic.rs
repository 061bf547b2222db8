//! Seeded random graphs with planted classes, for tests and benchmarks.

use rand::Rng;

use crate::error::Result;
use crate::graph::{FeatureSource, FeatureTable, Graph, LabelTable, NodeId};
use crate::rng::{keyed_rng, Domain};

/// Two equal blocks (`v < n/2` is block 0); every pair is linked with
/// probability `p_in` inside a block and `p_out` across.
pub fn two_block_graph(n: usize, p_in: f64, p_out: f64, seed: u64) -> Result<(Graph, LabelTable)> {
    let mut rng = keyed_rng(seed, Domain::Synthetic, 0, 0);
    let block = |v: usize| usize::from(v >= n / 2);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if block(u) == block(v) { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                edges.push((u as NodeId, v as NodeId));
            }
        }
    }
    let graph = Graph::from_edges(n, &edges)?;
    let labels = LabelTable::new(2, (0..n).map(|v| (v as NodeId, vec![block(v) as u32])).collect())?;
    Ok((graph, labels))
}

/// Shape of a citation-like graph with bag-of-words features.
#[derive(Debug, Clone, PartialEq)]
pub struct CitationLike {
    pub nodes: usize,
    pub classes: usize,
    pub edges: usize,
    /// Probability that an edge joins two nodes of the same class.
    pub homophily: f64,
    pub vocabulary: usize,
    pub words_per_node: usize,
    /// Probability that a word is drawn from the node's class topic rather
    /// than the whole vocabulary.
    pub topic_strength: f64,
}

impl CitationLike {
    /// Node, class, vocabulary and edge counts of the Cora citation graph.
    pub fn cora_sized() -> Self {
        CitationLike {
            nodes: 2708,
            classes: 7,
            edges: 5278,
            homophily: 0.81,
            vocabulary: 1433,
            words_per_node: 18,
            topic_strength: 0.3,
        }
    }

    /// Graph (with every node given at least one edge), binary
    /// bag-of-words features and one label per node.
    pub fn generate(&self, seed: u64) -> Result<(Graph, FeatureTable, LabelTable)> {
        let mut rng = keyed_rng(seed, Domain::Synthetic, 1, 0);
        let n = self.nodes;
        let class: Vec<usize> = (0..n).map(|v| v * self.classes / n).collect();
        let members: Vec<Vec<usize>> =
            (0..self.classes).map(|c| (0..n).filter(|&v| class[v] == c).collect()).collect();
        let mut edges = Vec::with_capacity(self.edges + n);
        let link = |u: usize, rng: &mut rand_chacha::ChaCha8Rng| loop {
            let v = if rng.gen::<f64>() < self.homophily {
                let m = &members[class[u]];
                m[rng.gen_range(0..m.len())]
            } else {
                rng.gen_range(0..n)
            };
            if v != u {
                return (u as NodeId, v as NodeId);
            }
        };
        for u in 0..n {
            edges.push(link(u, &mut rng));
        }
        while edges.len() < self.edges {
            let u = rng.gen_range(0..n);
            edges.push(link(u, &mut rng));
        }
        let graph = Graph::from_edges(n, &edges)?;

        let topic = self.vocabulary / self.classes;
        let mut data = vec![0.0; n * self.vocabulary];
        for v in 0..n {
            for _ in 0..self.words_per_node {
                let w = if rng.gen::<f64>() < self.topic_strength {
                    class[v] * topic + rng.gen_range(0..topic)
                } else {
                    rng.gen_range(0..self.vocabulary)
                };
                data[v * self.vocabulary + w] = 1.0;
            }
        }
        let features = FeatureTable::from_rows(self.vocabulary, data, FeatureSource::GivenFixed)?;
        let labels =
            LabelTable::new(self.classes, (0..n).map(|v| (v as NodeId, vec![class[v] as u32])).collect())?;
        Ok((graph, features, labels))
    }
}
