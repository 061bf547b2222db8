//! Sampled softmax over output embeddings and negative sampling.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::math::{axpy, dot};

/// Whether the softmax denominator contains the positive node besides the
/// sampled negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SoftmaxMode {
    IncludePositive,
    ExcludePositive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxOutput {
    pub loss: f64,
    /// Gradient with respect to the output capsule `e`.
    pub d_output: Vec<f64>,
    /// Embedding rows touched: the target first, then the negatives.
    pub ids: Vec<NodeId>,
    /// The gradient of row `ids[j]` is `coefficients[j] * e`.
    pub coefficients: Vec<f64>,
}

impl SoftmaxOutput {
    pub fn row_gradient(&self, j: usize, output: &[f64]) -> Vec<f64> {
        output.iter().map(|&x| x * self.coefficients[j]).collect()
    }
}

/// `-log( exp(o_v . e) / sum_{v'} exp(o_v' . e) )` where `v'` ranges over
/// the negatives, plus `v` itself in [`SoftmaxMode::IncludePositive`].
///
/// `embeddings` holds one row of `output.len()` values per node.
/// `ExcludePositive` needs at least one negative.
pub fn sampled_softmax_loss(
    output: &[f64],
    target: NodeId,
    negatives: &[NodeId],
    embeddings: &[f64],
    mode: SoftmaxMode,
) -> SoftmaxOutput {
    let k = output.len();
    let row = |v: NodeId| &embeddings[v as usize * k..(v as usize + 1) * k];
    let mut ids = Vec::with_capacity(negatives.len() + 1);
    ids.push(target);
    ids.extend_from_slice(negatives);
    let logits: Vec<f64> = ids.iter().map(|&v| dot(row(v), output)).collect();

    let in_denominator = |j: usize| j > 0 || mode == SoftmaxMode::IncludePositive;
    assert!(
        ids.len() > 1 || mode == SoftmaxMode::IncludePositive,
        "excluding the positive requires at least one negative"
    );
    let max =
        (0..ids.len()).filter(|&j| in_denominator(j)).map(|j| logits[j]).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> =
        (0..ids.len()).map(|j| if in_denominator(j) { (logits[j] - max).exp() } else { 0.0 }).collect();
    let total: f64 = exps.iter().sum();
    let lse = max + total.ln();
    let loss = lse - logits[0];

    let mut coefficients: Vec<f64> = exps.iter().map(|&x| x / total).collect();
    coefficients[0] -= 1.0;
    let mut d_output = vec![0.0; k];
    for (&v, &g) in ids.iter().zip(&coefficients) {
        axpy(g, row(v), &mut d_output);
    }
    SoftmaxOutput { loss, d_output, ids, coefficients }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NegativeDistribution {
    Uniform,
    /// Proportional to walk-visit count raised to 0.75.
    Unigram075,
}

impl FromStr for NegativeDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(NegativeDistribution::Uniform),
            "unigram-0.75" => Ok(NegativeDistribution::Unigram075),
            _ => Err(Error::Config(format!("unknown negative distribution {s:?} (uniform|unigram-0.75)"))),
        }
    }
}

impl fmt::Display for NegativeDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NegativeDistribution::Uniform => "uniform",
            NegativeDistribution::Unigram075 => "unigram-0.75",
        })
    }
}

/// `num` distinct ids drawn uniformly from `[0, num_nodes)` without `target`.
pub fn sample_negatives<R: Rng + ?Sized>(
    num: usize,
    target: NodeId,
    num_nodes: usize,
    rng: &mut R,
) -> Result<Vec<NodeId>> {
    if num >= num_nodes {
        return Err(Error::Config(format!("cannot draw {num} negatives from {num_nodes} nodes")));
    }
    Ok(index::sample(rng, num_nodes - 1, num).into_iter().map(|i| skip_target(i, target)).collect())
}

fn skip_target(i: usize, target: NodeId) -> NodeId {
    if i >= target as usize {
        i as NodeId + 1
    } else {
        i as NodeId
    }
}

/// Draws negatives under a fixed node distribution.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    num_nodes: usize,
    weights: Option<Vec<f64>>,
}

impl NegativeSampler {
    pub fn uniform(num_nodes: usize) -> Self {
        NegativeSampler { num_nodes, weights: None }
    }

    /// Weights `count^0.75`; nodes never visited get the weight of a single
    /// visit so every node stays drawable.
    pub fn unigram(visit_counts: &[u64]) -> Self {
        NegativeSampler {
            num_nodes: visit_counts.len(),
            weights: Some(visit_counts.iter().map(|&c| (c.max(1) as f64).powf(0.75)).collect()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, num: usize, target: NodeId, rng: &mut R) -> Result<Vec<NodeId>> {
        match &self.weights {
            None => sample_negatives(num, target, self.num_nodes, rng),
            Some(w) => {
                if num >= self.num_nodes {
                    return Err(Error::Config(format!(
                        "cannot draw {num} negatives from {} nodes",
                        self.num_nodes
                    )));
                }
                let picked = index::sample_weighted(
                    rng,
                    self.num_nodes - 1,
                    |i| w[skip_target(i, target) as usize],
                    num,
                )
                .map_err(|e| Error::Config(format!("weighted negative sampling: {e}")))?;
                Ok(picked.into_iter().map(|i| skip_target(i, target)).collect())
            }
        }
    }
}
