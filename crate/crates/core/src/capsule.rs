//! Two-layer capsule network: squash, position-indexed transforms, dynamic
//! routing into a single output capsule, and exact reverse-mode gradients
//! through every unrolled routing iteration.
//!
//! Transform `W_i` maps a `d`-dimensional first-layer capsule to a
//! `k`-dimensional prediction. It is stored transposed (`d` rows of `k`
//! values) so that sparse inputs touch contiguous rows.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FeatureTable, NodeId};
use crate::math::{axpy, dot, norm};
use crate::rng::{keyed_rng, Domain};
use crate::walk::ContextPair;

/// Added to the norm in the squash denominator so the zero vector maps to
/// zero with a finite derivative.
pub const SQUASH_EPS: f64 = 1e-12;

/// `(|x|^2 / (1 + |x|^2)) * x / (|x| + eps)`.
pub fn squash(x: &[f64]) -> Vec<f64> {
    let n = norm(x);
    let scale = n * n / ((1.0 + n * n) * (n + SQUASH_EPS));
    x.iter().map(|&v| v * scale).collect()
}

/// Vector-Jacobian product of [`squash`] at `x` with `upstream`.
///
/// The Jacobian is `g(n) I + (g'(n)/n) x x^T` with
/// `g(n) = n^2 / ((1+n^2)(n+eps))`, and
/// `g'(n)/n = (n + 2 eps - n^3) / ((1+n^2)^2 (n+eps)^2)`.
pub fn squash_vjp(x: &[f64], upstream: &[f64]) -> Vec<f64> {
    let n = norm(x);
    let n2 = n * n;
    let g = n2 / ((1.0 + n2) * (n + SQUASH_EPS));
    let denom = (1.0 + n2) * (n + SQUASH_EPS);
    let h = (n + 2.0 * SQUASH_EPS - n2 * n) / (denom * denom);
    let proj = h * dot(x, upstream);
    x.iter().zip(upstream).map(|(&xi, &ui)| g * ui + proj * xi).collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&b| (b - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// How routing logits are refreshed after each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoutingRule {
    /// `b_i <- u_hat_i . e`
    Ours,
    /// `b_i <- b_i + u_hat_i . e`
    Sabour,
}

impl FromStr for RoutingRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ours" => Ok(RoutingRule::Ours),
            "sabour" => Ok(RoutingRule::Sabour),
            _ => Err(Error::Config(format!("unknown routing rule {s:?} (ours|sabour)"))),
        }
    }
}

impl fmt::Display for RoutingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoutingRule::Ours => "ours",
            RoutingRule::Sabour => "sabour",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingConfig {
    pub iterations: usize,
    pub rule: RoutingRule,
    /// Treat the coupling coefficients as constants in the backward pass.
    pub stop_gradient: bool,
}

impl RoutingConfig {
    pub fn new(iterations: usize, rule: RoutingRule) -> Self {
        RoutingConfig { iterations, rule, stop_gradient: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("routing needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// Per-iteration routing intermediates.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTrace {
    /// Logits `b` entering each iteration.
    pub logits: Vec<Vec<f64>>,
    /// Coupling coefficients `c = softmax(b)` of each iteration.
    pub coefficients: Vec<Vec<f64>>,
    /// Weighted sums `s` of each iteration.
    pub sums: Vec<Vec<f64>>,
    /// Squashed outputs `e` of each iteration.
    pub outputs: Vec<Vec<f64>>,
}

/// Routes the predictions `uhat` (one `k`-vector per first-layer capsule)
/// into a single output capsule and returns its final activation.
pub fn route(uhat: &[Vec<f64>], cfg: &RoutingConfig) -> Result<(Vec<f64>, RoutingTrace)> {
    cfg.validate()?;
    let Some(first) = uhat.first() else {
        return Err(Error::Shape("routing needs at least one input capsule".into()));
    };
    let k = first.len();
    if uhat.iter().any(|u| u.len() != k) {
        return Err(Error::Shape("input capsules differ in dimension".into()));
    }
    let mut trace = RoutingTrace {
        logits: Vec::with_capacity(cfg.iterations),
        coefficients: Vec::with_capacity(cfg.iterations),
        sums: Vec::with_capacity(cfg.iterations),
        outputs: Vec::with_capacity(cfg.iterations),
    };
    let mut b = vec![0.0; uhat.len()];
    for it in 0..cfg.iterations {
        let c = softmax(&b);
        let mut s = vec![0.0; k];
        for (ci, u) in c.iter().zip(uhat) {
            axpy(*ci, u, &mut s);
        }
        let e = squash(&s);
        let next = if it + 1 < cfg.iterations {
            Some(match cfg.rule {
                RoutingRule::Ours => uhat.iter().map(|u| dot(u, &e)).collect(),
                RoutingRule::Sabour => b.iter().zip(uhat).map(|(bi, u)| bi + dot(u, &e)).collect(),
            })
        } else {
            None
        };
        trace.logits.push(std::mem::take(&mut b));
        trace.coefficients.push(c);
        trace.sums.push(s);
        trace.outputs.push(e);
        if let Some(next) = next {
            b = next;
        }
    }
    let e = trace.outputs.last().cloned().unwrap_or_default();
    Ok((e, trace))
}

/// Gradient of the loss with respect to every prediction `uhat_i`, given
/// the gradient `d_output` at the final routing output.
pub fn route_backward(
    uhat: &[Vec<f64>],
    trace: &RoutingTrace,
    cfg: &RoutingConfig,
    d_output: &[f64],
) -> Vec<Vec<f64>> {
    let k = d_output.len();
    let m = trace.outputs.len();
    let mut d_uhat = vec![vec![0.0; k]; uhat.len()];

    if cfg.stop_gradient {
        let d_s = squash_vjp(&trace.sums[m - 1], d_output);
        for (du, &c) in d_uhat.iter_mut().zip(&trace.coefficients[m - 1]) {
            axpy(c, &d_s, du);
        }
        return d_uhat;
    }

    // gradient with respect to the logits produced by iteration t
    let mut d_next_logits: Option<Vec<f64>> = None;
    for t in (0..m).rev() {
        let e = &trace.outputs[t];
        let c = &trace.coefficients[t];
        let mut d_e = if t + 1 == m { d_output.to_vec() } else { vec![0.0; k] };
        if let Some(db) = &d_next_logits {
            for ((u, du), &g) in uhat.iter().zip(d_uhat.iter_mut()).zip(db) {
                axpy(g, u, &mut d_e);
                axpy(g, e, du);
            }
        }
        let d_s = squash_vjp(&trace.sums[t], &d_e);
        let d_c: Vec<f64> = uhat.iter().map(|u| dot(u, &d_s)).collect();
        for (du, &ci) in d_uhat.iter_mut().zip(c) {
            axpy(ci, &d_s, du);
        }
        let mean: f64 = c.iter().zip(&d_c).map(|(a, b)| a * b).sum();
        let mut d_b: Vec<f64> = c.iter().zip(&d_c).map(|(ci, dci)| ci * (dci - mean)).collect();
        if cfg.rule == RoutingRule::Sabour {
            if let Some(db) = &d_next_logits {
                axpy(1.0, db, &mut d_b);
            }
        }
        d_next_logits = Some(d_b);
    }
    d_uhat
}

/// Model parameters: one transform per context position, the node input
/// features (fixed or learned), and the output embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct CapsuleParams {
    input_dim: usize,
    output_dim: usize,
    transforms: Vec<Vec<f64>>,
    features: FeatureTable,
    embeddings: Vec<f64>,
}

impl CapsuleParams {
    /// Transforms are drawn uniform on `±sqrt(6/(d+k))`; embeddings uniform
    /// on `±1/sqrt(k)`.
    pub fn init(features: FeatureTable, positions: usize, output_dim: usize, seed: u64) -> Result<Self> {
        if positions == 0 || output_dim == 0 {
            return Err(Error::Config(
                "need at least one context position and a positive embedding size".into(),
            ));
        }
        let d = features.dim();
        let k = output_dim;
        let mut rng = keyed_rng(seed, Domain::Init, 1, 0);
        let bound = (6.0 / (d + k) as f64).sqrt();
        let transforms =
            (0..positions).map(|_| (0..d * k).map(|_| rng.gen_range(-bound..=bound)).collect()).collect();
        let mut rng = keyed_rng(seed, Domain::Init, 2, 0);
        let ebound = 1.0 / (k as f64).sqrt();
        let embeddings = (0..features.num_rows() * k).map(|_| rng.gen_range(-ebound..=ebound)).collect();
        Ok(CapsuleParams { input_dim: d, output_dim: k, transforms, features, embeddings })
    }

    /// Assembles parameters from explicit tensors. Each transform is given
    /// transposed: `d` rows of `k` values.
    pub fn from_parts(
        features: FeatureTable,
        output_dim: usize,
        transforms: Vec<Vec<f64>>,
        embeddings: Vec<f64>,
    ) -> Result<Self> {
        let d = features.dim();
        if transforms.is_empty() || transforms.iter().any(|w| w.len() != d * output_dim) {
            return Err(Error::Shape(format!("every transform must hold {d}x{output_dim} values")));
        }
        if embeddings.len() != features.num_rows() * output_dim {
            return Err(Error::Shape(format!(
                "embedding table must hold {} rows of {output_dim}",
                features.num_rows()
            )));
        }
        Ok(CapsuleParams { input_dim: d, output_dim, transforms, features, embeddings })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn num_positions(&self) -> usize {
        self.transforms.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.features.num_rows()
    }

    pub fn features(&self) -> &FeatureTable {
        &self.features
    }

    pub fn features_mut(&mut self) -> &mut FeatureTable {
        &mut self.features
    }

    /// Transposed transform of position `i` (`d` rows of `k`).
    pub fn transform(&self, i: usize) -> &[f64] {
        &self.transforms[i]
    }

    pub fn transforms(&self) -> &[Vec<f64>] {
        &self.transforms
    }

    pub fn transforms_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.transforms
    }

    pub fn embedding(&self, v: NodeId) -> &[f64] {
        let k = self.output_dim;
        &self.embeddings[v as usize * k..(v as usize + 1) * k]
    }

    pub fn embeddings(&self) -> &[f64] {
        &self.embeddings
    }

    pub fn embeddings_mut(&mut self) -> &mut [f64] {
        &mut self.embeddings
    }

    /// Disjoint mutable views of the transforms, the embeddings and, when
    /// learned, the feature values.
    pub fn tensors_mut(&mut self) -> (&mut [Vec<f64>], &mut [f64], Option<&mut [f64]>) {
        (&mut self.transforms, &mut self.embeddings, self.features.values_mut())
    }

    /// `W_i u` for a transposed transform, skipping zero input entries.
    fn apply_transform(&self, i: usize, u: &[f64]) -> Vec<f64> {
        let k = self.output_dim;
        let w = &self.transforms[i];
        let mut out = vec![0.0; k];
        for (c, &uc) in u.iter().enumerate() {
            if uc != 0.0 {
                axpy(uc, &w[c * k..(c + 1) * k], &mut out);
            }
        }
        out
    }

    /// `W_i^T g`.
    fn apply_transform_transposed(&self, i: usize, g: &[f64]) -> Vec<f64> {
        let k = self.output_dim;
        self.transforms[i].chunks_exact(k).map(|row| dot(row, g)).collect()
    }
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub context: Vec<NodeId>,
    /// First-layer capsules `u_i = squash(x_{v_i})`.
    pub inputs: Vec<Vec<f64>>,
    /// Predictions `uhat_i = W_i u_i`.
    pub predictions: Vec<Vec<f64>>,
    pub routing: RoutingTrace,
    /// Final output capsule `e`.
    pub output: Vec<f64>,
}

pub fn forward(pair: &ContextPair, params: &CapsuleParams, cfg: &RoutingConfig) -> Result<ForwardTrace> {
    forward_context(&pair.context, params, cfg)
}

pub fn forward_context(
    context: &[NodeId],
    params: &CapsuleParams,
    cfg: &RoutingConfig,
) -> Result<ForwardTrace> {
    forward_with_features(context, params, &params.features, cfg)
}

/// Forward pass reading first-layer inputs from `features` instead of the
/// parameters' own table, e.g. a graph that grew after training.
pub fn forward_with_features(
    context: &[NodeId],
    params: &CapsuleParams,
    features: &FeatureTable,
    cfg: &RoutingConfig,
) -> Result<ForwardTrace> {
    if features.dim() != params.input_dim() {
        return Err(Error::Shape(format!(
            "features of dimension {} for transforms expecting {}",
            features.dim(),
            params.input_dim()
        )));
    }
    if context.len() != params.num_positions() {
        return Err(Error::Shape(format!(
            "context of {} nodes for {} transforms",
            context.len(),
            params.num_positions()
        )));
    }
    if let Some(&bad) = context.iter().find(|&&v| v as usize >= features.num_rows()) {
        return Err(Error::Shape(format!(
            "context node {bad} outside feature table of {} rows",
            features.num_rows()
        )));
    }
    let inputs: Vec<Vec<f64>> = context.iter().map(|&v| squash(features.row(v))).collect();
    let predictions: Vec<Vec<f64>> =
        inputs.iter().enumerate().map(|(i, u)| params.apply_transform(i, u)).collect();
    let (output, routing) = route(&predictions, cfg)?;
    Ok(ForwardTrace { context: context.to_vec(), inputs, predictions, routing, output })
}

/// Gradient of one transform for one pair: the rank-one matrix
/// `output_grad ⊗ input`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformGrad {
    /// Gradient at the prediction `uhat_i` (length `k`).
    pub output_grad: Vec<f64>,
    /// Nonzero entries `(c, u_ic)` of the first-layer capsule `u_i`.
    pub input: Vec<(usize, f64)>,
    /// Length `d` of `u_i`.
    pub input_dim: usize,
}

impl TransformGrad {
    /// Adds `scale * output_grad ⊗ input` to a transposed dense buffer.
    pub fn accumulate_into(&self, dense: &mut [f64], scale: f64) {
        let k = self.output_grad.len();
        for &(c, uc) in &self.input {
            axpy(scale * uc, &self.output_grad, &mut dense[c * k..(c + 1) * k]);
        }
    }

    /// Dense transposed gradient (`d` rows of `k`).
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.input_dim * self.output_grad.len()];
        self.accumulate_into(&mut out, 1.0);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapsuleGrads {
    /// One entry per context position.
    pub transforms: Vec<TransformGrad>,
    /// Gradient of each context node's input feature row, in context order
    /// (a node repeated in the context appears repeatedly). `None` for
    /// fixed features.
    pub features: Option<Vec<(NodeId, Vec<f64>)>>,
}

pub fn backward(
    trace: &ForwardTrace,
    params: &CapsuleParams,
    cfg: &RoutingConfig,
    d_output: &[f64],
) -> Result<CapsuleGrads> {
    let k = params.output_dim();
    if trace.context.len() != params.num_positions()
        || d_output.len() != k
        || trace.output.len() != k
        || trace.routing.outputs.len() != cfg.iterations
        || trace.inputs.iter().any(|u| u.len() != params.input_dim())
    {
        return Err(Error::Shape("trace does not match parameters or routing configuration".into()));
    }
    let d_uhat = route_backward(&trace.predictions, &trace.routing, cfg, d_output);
    let features = params.features.is_learned().then(|| {
        trace
            .context
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let d_u = params.apply_transform_transposed(i, &d_uhat[i]);
                (v, squash_vjp(params.features.row(v), &d_u))
            })
            .collect()
    });
    let transforms = d_uhat
        .into_iter()
        .zip(&trace.inputs)
        .map(|(g, u)| TransformGrad {
            output_grad: g,
            input: u.iter().copied().enumerate().filter(|&(_, x)| x != 0.0).collect(),
            input_dim: u.len(),
        })
        .collect();
    Ok(CapsuleGrads { transforms, features })
}
