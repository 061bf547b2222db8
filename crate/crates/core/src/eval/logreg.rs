//! One-vs-rest L2-regularised logistic regression.
//!
//! Each class minimises the mean binary cross-entropy plus
//! `(l2 / 2) * |w|^2`; the bias is not regularised. The solver is full-batch
//! gradient descent, diagonally preconditioned by a curvature bound per
//! coordinate, with Armijo backtracking.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::Embeddings;
use crate::error::{Error, Result};
use crate::graph::{LabelTable, NodeId};
use crate::math::dot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub l2: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl LogRegConfig {
    pub fn new(l2: f64) -> Self {
        LogRegConfig { l2, tolerance: 1e-6, max_iterations: 500 }
    }
}

/// Bias used by the constant classifier of a class that is all-negative
/// (or all-positive) in training.
const CONSTANT_LOGIT: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub dim: usize,
    /// Per class `dim` weights followed by the bias.
    pub weights: Vec<Vec<f64>>,
    pub l2: f64,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Objective and gradient of one binary problem. `w` holds the weights
/// followed by the bias; `y` entries are 0 or 1.
pub fn objective_and_grad(w: &[f64], x: &[Vec<f64>], y: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let dim = w.len() - 1;
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; w.len()];
    for (xi, &yi) in x.iter().zip(y) {
        let z = dot(&w[..dim], xi) + w[dim];
        loss += softplus(z) - yi * z;
        let r = (sigmoid(z) - yi) / n;
        for (g, xv) in grad[..dim].iter_mut().zip(xi) {
            *g += r * xv;
        }
        grad[dim] += r;
    }
    let reg: f64 = w[..dim].iter().map(|v| v * v).sum();
    for (g, v) in grad[..dim].iter_mut().zip(&w[..dim]) {
        *g += l2 * v;
    }
    (loss / n + 0.5 * l2 * reg, grad)
}

/// Minimises one binary problem from `w = 0`.
pub fn fit_binary(x: &[Vec<f64>], y: &[f64], cfg: &LogRegConfig) -> Vec<f64> {
    let dim = x.first().map_or(0, Vec::len);
    let n = x.len() as f64;
    let precond: Vec<f64> = (0..=dim)
        .map(|j| {
            if j == dim {
                4.0
            } else {
                let second = x.iter().map(|xi| xi[j] * xi[j]).sum::<f64>() / n;
                1.0 / (0.25 * second + cfg.l2).max(1e-12)
            }
        })
        .collect();
    let mut w = vec![0.0; dim + 1];
    let (mut f, mut g) = objective_and_grad(&w, x, y, cfg.l2);
    let mut step: f64 = 1.0;
    for _ in 0..cfg.max_iterations {
        if dot(&g, &g).sqrt() <= cfg.tolerance {
            break;
        }
        let dir: Vec<f64> = g.iter().zip(&precond).map(|(gi, p)| -gi * p).collect();
        let slope = dot(&g, &dir);
        step = (step * 2.0).min(1e6);
        let mut accepted = None;
        while step > 1e-20 {
            let trial: Vec<f64> = w.iter().zip(&dir).map(|(wi, di)| wi + step * di).collect();
            let (ft, gt) = objective_and_grad(&trial, x, y, cfg.l2);
            if ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, ft, gt)) => {
                w = trial;
                f = ft;
                g = gt;
            }
            None => break,
        }
    }
    w
}

fn design_rows(emb: &Embeddings, ids: &[NodeId]) -> Result<Vec<Vec<f64>>> {
    ids.iter()
        .map(|&v| {
            emb.get(v).map(<[f64]>::to_vec).ok_or_else(|| Error::Shape(format!("no embedding for node {v}")))
        })
        .collect()
}

pub fn train_logreg(
    emb: &Embeddings,
    ids: &[NodeId],
    labels: &LabelTable,
    cfg: &LogRegConfig,
) -> Result<LogRegModel> {
    if ids.is_empty() {
        return Err(Error::Config("cannot train a classifier on zero nodes".into()));
    }
    let x = design_rows(emb, ids)?;
    let dim = emb.dim();
    let weights = (0..labels.num_classes() as u32)
        .into_par_iter()
        .map(|c| {
            let y: Vec<f64> =
                ids.iter().map(|&v| f64::from(u8::from(labels.labels(v).contains(&c)))).collect();
            let positives = y.iter().filter(|&&t| t > 0.5).count();
            if positives == 0 || positives == y.len() {
                warn!("class {c} has {positives} of {} training nodes; using a constant classifier", y.len());
                let mut w = vec![0.0; dim + 1];
                w[dim] = if positives == 0 { -CONSTANT_LOGIT } else { CONSTANT_LOGIT };
                w
            } else {
                fit_binary(&x, &y, cfg)
            }
        })
        .collect();
    Ok(LogRegModel { dim, weights, l2: cfg.l2 })
}

/// How label sets are read off class probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictMode<'a> {
    /// The most probable class; ties go to the lowest class id.
    SingleLabel,
    /// The `L` most probable classes, `L` given per node.
    TopL(&'a [usize]),
    /// Every class with probability at least the threshold.
    Threshold(f64),
}

impl LogRegModel {
    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        self.weights.iter().map(|w| sigmoid(dot(&w[..self.dim], x) + w[self.dim])).collect()
    }
}

pub fn predict(
    model: &LogRegModel,
    emb: &Embeddings,
    ids: &[NodeId],
    mode: PredictMode<'_>,
) -> Result<Vec<Vec<u32>>> {
    if let PredictMode::TopL(counts) = mode {
        if counts.len() != ids.len() {
            return Err(Error::Shape(format!("{} label counts for {} nodes", counts.len(), ids.len())));
        }
    }
    let x = design_rows(emb, ids)?;
    Ok(x.iter()
        .enumerate()
        .map(|(i, xi)| {
            let p = model.probabilities(xi);
            // stable sort keeps lower class ids first among equal probabilities
            let mut order: Vec<u32> = (0..p.len() as u32).collect();
            order.sort_by(|&a, &b| p[b as usize].total_cmp(&p[a as usize]));
            match mode {
                PredictMode::SingleLabel => order.into_iter().take(1).collect(),
                PredictMode::TopL(counts) => {
                    let mut top: Vec<u32> = order.into_iter().take(counts[i]).collect();
                    top.sort_unstable();
                    top
                }
                PredictMode::Threshold(t) => (0..p.len() as u32).filter(|&c| p[c as usize] >= t).collect(),
            }
        })
        .collect())
}
