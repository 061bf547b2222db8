//! Mini-batch training of the capsule model with a sampled softmax and Adam.
//!
//! Each epoch shuffles the pair slots of a fixed walk corpus, and for every
//! mini-batch runs the forward pass, draws negatives, back-propagates the
//! loss, averages gradients over the batch and applies one Adam step to the
//! transforms, the output embeddings and (when learned) the input features.
//!
//! Shuffling and negatives are drawn from streams keyed by epoch and pair,
//! so training is a pure function of the configuration. In deterministic
//! mode per-pair gradients are reduced in batch order; fast mode lets worker
//! threads fold partial sums in whatever order they finish.

mod adam;
mod checkpoint;
mod loss;

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState, ParamSlot, BETA1, BETA2, EPSILON};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{
    sample_negatives, sampled_softmax_loss, NegativeDistribution, NegativeSampler, SoftmaxMode, SoftmaxOutput,
};

use crate::capsule::{backward, forward_context, CapsuleGrads, CapsuleParams, RoutingConfig};
use crate::error::{Error, Result};
use crate::graph::{FeatureTable, Graph, NodeId};
use crate::math::axpy;
use crate::rng::{keyed_rng, Domain};
use crate::walk::{pair_at, pair_slots, sample_walks, Corpus, PairSlot, WalkConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub num_negatives: usize,
    pub epochs: usize,
    pub embedding_dim: usize,
    pub walk: WalkConfig,
    pub routing: RoutingConfig,
    pub softmax: SoftmaxMode,
    pub negatives: NegativeDistribution,
    pub deterministic: bool,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        self.walk.validate()?;
        self.routing.validate()?;
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be finite and non-negative".into()));
        }
        if self.batch_size == 0 || self.embedding_dim == 0 {
            return Err(Error::Config("batch size and embedding size must be positive".into()));
        }
        if self.num_negatives == 0 {
            return Err(Error::Config("need at least one negative".into()));
        }
        if self.num_negatives >= num_nodes {
            return Err(Error::Config(format!(
                "{} negatives requested from a graph of {num_nodes} nodes",
                self.num_negatives
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based epoch number.
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_seconds: f64,
}

/// Writes the loss log as `epoch,mean_loss,wall_seconds` CSV.
pub fn write_loss_log<W: Write>(log: &[EpochLog], mut out: W) -> Result<()> {
    writeln!(out, "epoch,mean_loss,wall_seconds")?;
    for row in log {
        writeln!(out, "{},{},{:.3}", row.epoch, row.mean_loss, row.wall_seconds)?;
    }
    Ok(())
}

/// Dense gradient buffers mirroring the parameters.
struct GradBuffers {
    transforms: Vec<Vec<f64>>,
    embeddings: Vec<f64>,
    features: Option<Vec<f64>>,
    loss: f64,
}

impl GradBuffers {
    fn zeros(params: &CapsuleParams) -> Self {
        GradBuffers {
            transforms: params.transforms().iter().map(|w| vec![0.0; w.len()]).collect(),
            embeddings: vec![0.0; params.embeddings().len()],
            features: params.features().is_learned().then(|| vec![0.0; params.features().as_slice().len()]),
            loss: 0.0,
        }
    }

    fn clear(&mut self) {
        self.transforms.iter_mut().for_each(|w| w.fill(0.0));
        self.embeddings.fill(0.0);
        if let Some(f) = &mut self.features {
            f.fill(0.0);
        }
        self.loss = 0.0;
    }

    fn add_pair(&mut self, pair: &PairGrad, k: usize, d: usize, scale: f64) {
        self.loss += pair.loss;
        for (&v, &c) in pair.softmax.ids.iter().zip(&pair.softmax.coefficients) {
            let row = &mut self.embeddings[v as usize * k..(v as usize + 1) * k];
            axpy(scale * c, &pair.output, row);
        }
        for (dense, g) in self.transforms.iter_mut().zip(&pair.capsule.transforms) {
            g.accumulate_into(dense, scale);
        }
        if let (Some(dense), Some(rows)) = (&mut self.features, &pair.capsule.features) {
            for (v, g) in rows {
                axpy(scale, g, &mut dense[*v as usize * d..(*v as usize + 1) * d]);
            }
        }
    }

    fn merge(mut self, other: GradBuffers) -> GradBuffers {
        for (a, b) in self.transforms.iter_mut().zip(&other.transforms) {
            axpy(1.0, b, a);
        }
        axpy(1.0, &other.embeddings, &mut self.embeddings);
        if let (Some(a), Some(b)) = (&mut self.features, &other.features) {
            axpy(1.0, b, a);
        }
        self.loss += other.loss;
        self
    }
}

struct PairGrad {
    loss: f64,
    output: Vec<f64>,
    softmax: SoftmaxOutput,
    capsule: CapsuleGrads,
}

/// Stateful trainer; one call to [`Trainer::run_epoch`] per epoch.
pub struct Trainer<'g> {
    graph: &'g Graph,
    config: TrainConfig,
    corpus: Corpus,
    slots: Vec<PairSlot>,
    sampler: NegativeSampler,
    params: CapsuleParams,
    optimizer: AdamState,
    epoch: usize,
    log: Vec<EpochLog>,
}

impl<'g> Trainer<'g> {
    /// Samples the walk corpus and initializes parameters.
    pub fn new(graph: &'g Graph, features: FeatureTable, config: TrainConfig) -> Result<Self> {
        config.validate(graph.num_nodes())?;
        let corpus = sample_walks(graph, &config.walk)?;
        Self::with_corpus(graph, features, config, corpus)
    }

    /// Like [`Trainer::new`] with a pre-computed (e.g. reloaded) corpus.
    pub fn with_corpus(
        graph: &'g Graph,
        features: FeatureTable,
        config: TrainConfig,
        corpus: Corpus,
    ) -> Result<Self> {
        config.validate(graph.num_nodes())?;
        if features.num_rows() != graph.num_nodes() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} nodes",
                features.num_rows(),
                graph.num_nodes()
            )));
        }
        let params =
            CapsuleParams::init(features, config.walk.walk_length - 1, config.embedding_dim, config.seed)?;
        let optimizer = AdamState::new(&param_sizes(&params));
        Self::assemble(graph, config, corpus, params, optimizer, 0, Vec::new())
    }

    /// Continues a run from a checkpoint taken on the same graph.
    pub fn resume(graph: &'g Graph, checkpoint: Checkpoint) -> Result<Self> {
        let Checkpoint { config, epoch, params, optimizer, loss_log, .. } = checkpoint;
        config.validate(graph.num_nodes())?;
        if params.num_nodes() != graph.num_nodes() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} nodes, graph has {}",
                params.num_nodes(),
                graph.num_nodes()
            )));
        }
        if optimizer.sizes() != param_sizes(&params) {
            return Err(Error::Checkpoint("optimizer state does not match parameters".into()));
        }
        let corpus = sample_walks(graph, &config.walk)?;
        Self::assemble(graph, config, corpus, params, optimizer, epoch, loss_log)
    }

    fn assemble(
        graph: &'g Graph,
        config: TrainConfig,
        corpus: Corpus,
        params: CapsuleParams,
        optimizer: AdamState,
        epoch: usize,
        log: Vec<EpochLog>,
    ) -> Result<Self> {
        if let Some(&bad) = corpus.walks().flatten().find(|&&v| v as usize >= graph.num_nodes()) {
            return Err(Error::Config(format!("corpus node {bad} outside the graph")));
        }
        let slots = pair_slots(&corpus, &config.walk)?;
        let sampler = match config.negatives {
            NegativeDistribution::Uniform => NegativeSampler::uniform(graph.num_nodes()),
            NegativeDistribution::Unigram075 => {
                NegativeSampler::unigram(&corpus.visit_counts(graph.num_nodes()))
            }
        };
        Ok(Trainer { graph, config, corpus, slots, sampler, params, optimizer, epoch, log })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn graph(&self) -> &Graph {
        self.graph
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn params(&self) -> &CapsuleParams {
        &self.params
    }

    pub fn into_params(self) -> CapsuleParams {
        self.params
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn loss_log(&self) -> &[EpochLog] {
        &self.log
    }

    pub fn num_pairs(&self) -> usize {
        self.slots.len()
    }

    pub fn checkpoint(&self, node_ids: Option<Vec<NodeId>>) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            epoch: self.epoch,
            node_ids: node_ids.unwrap_or_else(|| (0..self.graph.num_nodes() as NodeId).collect()),
            params: self.params.clone(),
            optimizer: self.optimizer.clone(),
            loss_log: self.log.clone(),
        }
    }

    fn pair_grad(&self, slot_index: usize) -> Result<PairGrad> {
        let slot = self.slots[slot_index];
        let walk = self.corpus.walk(slot.walk as usize);
        let pair = pair_at(walk, slot.position as usize);
        let trace = forward_context(&pair.context, &self.params, &self.config.routing)?;
        let mut rng = keyed_rng(self.config.seed, Domain::Negative, self.epoch as u64, slot_index as u64);
        let negatives = self.sampler.sample(self.config.num_negatives, pair.target, &mut rng)?;
        let softmax = sampled_softmax_loss(
            &trace.output,
            pair.target,
            &negatives,
            self.params.embeddings(),
            self.config.softmax,
        );
        let capsule = backward(&trace, &self.params, &self.config.routing, &softmax.d_output)?;
        Ok(PairGrad { loss: softmax.loss, output: trace.output, softmax, capsule })
    }

    fn batch_grads(&self, batch: &[usize], buffers: &mut GradBuffers) -> Result<()> {
        let k = self.params.output_dim();
        let d = self.params.input_dim();
        let scale = 1.0 / batch.len() as f64;
        buffers.clear();
        if self.config.deterministic {
            let pairs: Vec<PairGrad> = batch.par_iter().map(|&i| self.pair_grad(i)).collect::<Result<_>>()?;
            for pair in &pairs {
                buffers.add_pair(pair, k, d, scale);
            }
        } else {
            let partial = batch
                .par_iter()
                .try_fold(
                    || GradBuffers::zeros(&self.params),
                    |mut acc, &i| {
                        acc.add_pair(&self.pair_grad(i)?, k, d, scale);
                        Ok::<_, Error>(acc)
                    },
                )
                .try_reduce(|| GradBuffers::zeros(&self.params), |a, b| Ok(a.merge(b)))?;
            *buffers = partial;
        }
        Ok(())
    }

    /// Runs one epoch and returns its log entry.
    pub fn run_epoch(&mut self) -> Result<EpochLog> {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..self.slots.len()).collect();
        let mut rng = keyed_rng(self.config.seed, Domain::Shuffle, 0, self.epoch as u64);
        order.shuffle(&mut rng);

        let mut buffers = GradBuffers::zeros(&self.params);
        let mut total_loss = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            self.batch_grads(batch, &mut buffers)?;
            total_loss += buffers.loss;
            apply_update(&mut self.params, &buffers, &mut self.optimizer, self.config.learning_rate)?;
        }
        self.epoch += 1;
        let entry = EpochLog {
            epoch: self.epoch,
            mean_loss: total_loss / self.slots.len().max(1) as f64,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("epoch {} mean loss {:.6} ({:.1}s)", entry.epoch, entry.mean_loss, entry.wall_seconds);
        self.log.push(entry);
        Ok(entry)
    }
}

fn param_sizes(params: &CapsuleParams) -> Vec<usize> {
    let mut sizes: Vec<usize> = params.transforms().iter().map(Vec::len).collect();
    sizes.push(params.embeddings().len());
    if params.features().is_learned() {
        sizes.push(params.features().as_slice().len());
    }
    sizes
}

fn apply_update(
    params: &mut CapsuleParams,
    grads: &GradBuffers,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let (transforms, embeddings, features) = params.tensors_mut();
    let mut slots: Vec<ParamSlot<'_>> = transforms
        .iter_mut()
        .zip(&grads.transforms)
        .map(|(w, g)| ParamSlot { name: "transform", values: w.as_mut_slice(), grad: g.as_slice() })
        .collect();
    slots.push(ParamSlot { name: "embeddings", values: embeddings, grad: &grads.embeddings });
    if let (Some(values), Some(grad)) = (features, &grads.features) {
        slots.push(ParamSlot { name: "features", values, grad });
    }
    adam_step(&mut slots, state, lr)
}

/// Trains for `config.epochs` epochs; returns the parameters and the loss
/// log.
pub fn train(
    graph: &Graph,
    features: FeatureTable,
    config: TrainConfig,
) -> Result<(CapsuleParams, Vec<EpochLog>)> {
    let epochs = config.epochs;
    let mut trainer = Trainer::new(graph, features, config)?;
    for _ in 0..epochs {
        trainer.run_epoch()?;
    }
    let log = trainer.loss_log().to_vec();
    Ok((trainer.into_params(), log))
}
