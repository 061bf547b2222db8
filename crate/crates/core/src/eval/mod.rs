//! Node-classification evaluation of embeddings.

mod logreg;
mod metrics;
mod protocol;
mod splits;

pub use logreg::{
    fit_binary, objective_and_grad, predict, train_logreg, LogRegConfig, LogRegModel, PredictMode,
};
pub use metrics::{metrics, Metrics};
pub use protocol::{evaluate_run, EvalConfig, L2Strength, MultiLabelRule, Report, Snapshot, SplitResult};
pub use splits::{
    make_citation_splits, make_fraction_splits, read_splits, write_splits, EvalSplit, Protocol,
};
