//! Node embeddings from a two-layer capsule network.
//!
//! Random walks over a graph yield (context, target) pairs. Each context
//! node's feature vector becomes a first-layer capsule; a position-specific
//! transform and dynamic routing aggregate them into one output capsule,
//! which is trained through a sampled softmax to predict the target node.
//! Embeddings for nodes unseen at training time are inferred by averaging
//! the output capsule over sampled contexts.

pub mod capsule;
pub mod datasets;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod graph;
pub mod inductive;
pub mod math;
pub mod rng;
pub mod synthetic;
pub mod trainer;
pub mod walk;

pub use capsule::{
    backward, forward, forward_context, forward_with_features, route, squash, CapsuleGrads, CapsuleParams,
    ForwardTrace, RoutingConfig, RoutingRule,
};
pub use embedding::Embeddings;
pub use error::{Error, Result};
pub use eval::{evaluate_run, EvalConfig, EvalSplit, Metrics, Protocol, Report};
pub use graph::{
    init_learned_features, load_edge_list, load_features, load_labels, FeatureSource, FeatureTable, Graph,
    LabelTable, NodeId,
};
pub use inductive::{infer_embedding, infer_embeddings, InductiveConfig};
pub use trainer::{train, TrainConfig, Trainer};
pub use walk::{extract_pairs, sample_walks, ContextPair, Corpus, TargetStrategy, WalkConfig};
