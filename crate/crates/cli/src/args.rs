use std::path::PathBuf;

use c2ne_core::eval::{L2Strength, Protocol};
use c2ne_core::trainer::NegativeDistribution;
use c2ne_core::{RoutingRule, TargetStrategy};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "c2ne", version, about = "Capsule-network node embeddings")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "C2NE_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a random-walk corpus.
    Walks(WalksArgs),
    /// Train the model and write per-epoch embedding snapshots.
    Train(TrainArgs),
    /// Infer embeddings for nodes unseen in training.
    Infer(InferArgs),
    /// Generate evaluation splits without scoring anything.
    Splits(SplitsArgs),
    /// Score embedding snapshots on node classification.
    Eval(EvalArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
    /// Convert a `.content` / `.cites` citation dataset to edge, feature,
    /// label and name files.
    Import(ImportArgs),
}

#[derive(Debug, Args)]
pub struct WalksArgs {
    #[arg(long)]
    pub edges: PathBuf,
    /// Walks per node.
    #[arg(long = "T", default_value_t = 8)]
    pub walks_per_node: usize,
    /// Walk length.
    #[arg(long = "q", default_value_t = 10)]
    pub walk_length: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub edges: PathBuf,
    /// Fixed input features as `node index value` triplets.
    #[arg(long, conflicts_with = "learn_features", required_unless_present_any = ["learn_features", "resume"])]
    pub features: Option<PathBuf>,
    /// Feature dimension of --features (one past the largest index when omitted).
    #[arg(long, requires = "features")]
    pub feature_dim: Option<usize>,
    /// Learn input features of this dimension instead of loading them.
    #[arg(long, value_name = "D")]
    pub learn_features: Option<usize>,
    #[arg(long = "T", default_value_t = 8)]
    pub walks_per_node: usize,
    #[arg(long = "q", default_value_t = 10)]
    pub walk_length: usize,
    /// random | rotate | idx:i,j,...
    #[arg(long, default_value = "rotate")]
    pub targets: TargetStrategy,
    /// Embedding size.
    #[arg(long, default_value_t = 128)]
    pub k: usize,
    /// Negatives per pair.
    #[arg(long, default_value_t = 256)]
    pub neg: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    /// Routing iterations.
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    /// ours | sabour
    #[arg(long, default_value = "ours")]
    pub rule: RoutingRule,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Node ids (whitespace separated) removed from the graph before training.
    #[arg(long, conflicts_with = "holdout_split")]
    pub holdout: Option<PathBuf>,
    /// Remove the test nodes of split --split-index of this split file.
    #[arg(long)]
    pub holdout_split: Option<PathBuf>,
    #[arg(long, default_value_t = 0, requires = "holdout_split")]
    pub split_index: usize,
    /// Load the walk corpus from this file instead of sampling it.
    #[arg(long, conflicts_with = "save_corpus")]
    pub corpus: Option<PathBuf>,
    /// Write the sampled walk corpus to this file.
    #[arg(long)]
    pub save_corpus: Option<PathBuf>,
    /// Treat routing coefficients as constants in the backward pass.
    #[arg(long)]
    pub stop_gradient_routing: bool,
    /// Leave the target out of the softmax denominator.
    #[arg(long)]
    pub exclude_positive: bool,
    /// uniform | unigram-0.75
    #[arg(long, default_value = "uniform")]
    pub negatives: NegativeDistribution,
    /// Also write a checkpoint after every epoch.
    #[arg(long)]
    pub checkpoint_every_epoch: bool,
    /// Reduce gradients in a fixed order so runs are bitwise reproducible.
    #[arg(long)]
    pub deterministic: bool,
    /// Continue from a checkpoint up to --epochs; model and walk settings
    /// come from the checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Edge list of the full graph, new nodes included.
    #[arg(long)]
    pub edges_with_new: PathBuf,
    /// Ids (whitespace separated) of the nodes to embed.
    #[arg(long)]
    pub new_ids: PathBuf,
    /// Input features of the full graph (required for fixed-feature models).
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Pairs averaged per node.
    #[arg(long = "Z", default_value_t = 10)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the trained embeddings, giving one file for all nodes.
    #[arg(long)]
    pub merge: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of epoch_XXX.emb snapshots.
    #[arg(long, required_unless_present = "embeddings", conflicts_with = "embeddings")]
    pub embeddings_dir: Option<PathBuf>,
    /// A single embedding file, scored as epoch 1.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub labels: PathBuf,
    /// fraction | citation
    #[arg(long)]
    pub protocol: Protocol,
    /// Training fraction for the fraction protocol.
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    /// Reuse splits from a file.
    #[arg(long, conflicts_with = "gen_splits")]
    pub splits_file: Option<PathBuf>,
    /// Number of splits to generate.
    #[arg(long)]
    pub gen_splits: Option<usize>,
    /// Save the generated splits.
    #[arg(long)]
    pub write_splits: Option<PathBuf>,
    /// Score only this split.
    #[arg(long)]
    pub only_split: Option<usize>,
    #[command(flatten)]
    pub sizes: SplitSizes,
    /// Classifier regularisation: a number or `auto` (1 / training nodes).
    #[arg(long, default_value = "auto")]
    pub l2: L2Strength,
    /// Score multi-label nodes with a probability threshold instead of top-L.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Dataset name written in the report.
    #[arg(long, default_value = "dataset")]
    pub dataset: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SplitSizes {
    /// Training nodes per class (citation protocol).
    #[arg(long, default_value_t = 20)]
    pub per_class: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_val: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_test: usize,
}

#[derive(Debug, Args)]
pub struct SplitsArgs {
    #[arg(long)]
    pub labels: PathBuf,
    /// fraction | citation
    #[arg(long)]
    pub protocol: Protocol,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long = "gen-splits", default_value_t = 10)]
    pub count: usize,
    #[command(flatten)]
    pub sizes: SplitSizes,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded location.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub content: PathBuf,
    #[arg(long)]
    pub cites: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Stem of the written files (`NAME.edges`, `NAME.features`, ...).
    #[arg(long)]
    pub name: String,
}
