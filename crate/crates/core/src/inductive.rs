//! Embeddings for nodes that were absent during training.
//!
//! Every walk starts at the new node, which is the target of the pair; the
//! `q - 1` following steps form the context. The embedding is the mean of
//! the capsule outputs over `samples` such pairs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capsule::{forward_with_features, CapsuleParams, RoutingConfig};
use crate::error::{Error, Result};
use crate::graph::{FeatureTable, Graph, NodeId};
use crate::rng::{keyed_rng, Domain};
use crate::walk::{walk_from, ContextPair};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InductiveConfig {
    /// Pairs averaged per node.
    pub samples: usize,
    /// Must equal the walk length used in training.
    pub walk_length: usize,
    pub seed: u64,
}

impl InductiveConfig {
    pub fn new(walk_length: usize, seed: u64) -> Self {
        InductiveConfig { samples: 10, walk_length, seed }
    }

    pub fn validate(&self, params: &CapsuleParams) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("need at least one sample per node".into()));
        }
        if self.walk_length != params.num_positions() + 1 {
            return Err(Error::Config(format!(
                "walk length {} does not match the {} transforms of the model",
                self.walk_length,
                params.num_positions()
            )));
        }
        Ok(())
    }
}

/// The `samples` pairs used for node `v`, walk `j` drawn from its own
/// keyed stream.
pub fn inductive_pairs(graph: &Graph, v: NodeId, cfg: &InductiveConfig) -> Result<Vec<ContextPair>> {
    if v as usize >= graph.num_nodes() {
        return Err(Error::Shape(format!("node {v} outside graph of {} nodes", graph.num_nodes())));
    }
    if graph.degree(v) == 0 {
        return Err(Error::IsolatedNode(v));
    }
    Ok((0..cfg.samples)
        .map(|j| {
            let mut rng = keyed_rng(cfg.seed, Domain::Inductive, v as u64, j as u64);
            let walk = walk_from(graph, v, cfg.walk_length, &mut rng);
            ContextPair { target: v, context: walk[1..].to_vec() }
        })
        .collect())
}

/// Mean capsule output for `v` over its sampled pairs. `features` must
/// cover every node of `graph`.
pub fn infer_embedding(
    params: &CapsuleParams,
    features: &FeatureTable,
    graph: &Graph,
    v: NodeId,
    routing: &RoutingConfig,
    cfg: &InductiveConfig,
) -> Result<Vec<f64>> {
    cfg.validate(params)?;
    if features.num_rows() != graph.num_nodes() {
        return Err(Error::Shape(format!(
            "{} feature rows for a graph of {} nodes",
            features.num_rows(),
            graph.num_nodes()
        )));
    }
    let pairs = inductive_pairs(graph, v, cfg)?;
    let mut mean = vec![0.0; params.output_dim()];
    for pair in &pairs {
        let trace = forward_with_features(&pair.context, params, features, routing)?;
        for (m, e) in mean.iter_mut().zip(&trace.output) {
            *m += e;
        }
    }
    let z = pairs.len() as f64;
    mean.iter_mut().for_each(|m| *m /= z);
    Ok(mean)
}

/// [`infer_embedding`] for many nodes in parallel, results in input order.
pub fn infer_embeddings(
    params: &CapsuleParams,
    features: &FeatureTable,
    graph: &Graph,
    nodes: &[NodeId],
    routing: &RoutingConfig,
    cfg: &InductiveConfig,
) -> Result<Vec<Vec<f64>>> {
    nodes.par_iter().map(|&v| infer_embedding(params, features, graph, v, routing, cfg)).collect()
}
