//! Epoch selection and test scoring over a set of splits.

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logreg::{predict, train_logreg, LogRegConfig, LogRegModel, PredictMode};
use super::metrics::{metrics, Metrics};
use super::splits::{EvalSplit, Protocol};
use crate::embedding::Embeddings;
use crate::error::{Error, Result};
use crate::graph::{LabelTable, NodeId};
use crate::rng::{keyed_rng, Domain};

/// Classifier regularisation: a fixed strength, or `1 / |train|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum L2Strength {
    Auto,
    Fixed(f64),
}

impl L2Strength {
    pub fn resolve(self, num_train: usize) -> f64 {
        match self {
            L2Strength::Auto => 1.0 / num_train.max(1) as f64,
            L2Strength::Fixed(v) => v,
        }
    }
}

impl std::str::FromStr for L2Strength {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(L2Strength::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(L2Strength::Fixed(v)),
            _ => Err(Error::Config(format!("l2 must be `auto` or a non-negative number, got {s:?}"))),
        }
    }
}

/// Multi-label datasets are scored with the top-L rule by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MultiLabelRule {
    TopL,
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub l2: L2Strength,
    /// Cross-validation folds for the fraction protocol.
    pub folds: usize,
    pub multi_label: MultiLabelRule,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { l2: L2Strength::Auto, folds: 10, multi_label: MultiLabelRule::TopL, seed: 0 }
    }
}

/// Embeddings written after `epoch` (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub epoch: usize,
    pub embeddings: Embeddings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: usize,
    pub epoch_selected: usize,
    pub test: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub protocol: Protocol,
    pub dataset: String,
    pub rows: Vec<SplitResult>,
}

impl Report {
    pub fn mean(&self) -> Metrics {
        let n = self.rows.len().max(1) as f64;
        let sum = |f: fn(&Metrics) -> f64| self.rows.iter().map(|r| f(&r.test)).sum::<f64>() / n;
        Metrics {
            accuracy: sum(|m| m.accuracy),
            micro_f1: sum(|m| m.micro_f1),
            macro_f1: sum(|m| m.macro_f1),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# macro_f1 averages every class; a class with no gold and no predicted nodes scores 0"
        )?;
        writeln!(out, "protocol,dataset,split,epoch_selected,accuracy,micro_f1,macro_f1")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6}",
                self.protocol,
                self.dataset,
                r.split,
                r.epoch_selected,
                r.test.accuracy,
                r.test.micro_f1,
                r.test.macro_f1
            )?;
        }
        let m = self.mean();
        writeln!(
            out,
            "{},{},mean,,{:.6},{:.6},{:.6}",
            self.protocol, self.dataset, m.accuracy, m.micro_f1, m.macro_f1
        )?;
        out.flush()?;
        Ok(())
    }
}

struct Scorer<'a> {
    labels: &'a LabelTable,
    cfg: &'a EvalConfig,
}

impl Scorer<'_> {
    fn fit(&self, emb: &Embeddings, train: &[NodeId]) -> Result<LogRegModel> {
        let l2 = self.cfg.l2.resolve(train.len());
        train_logreg(emb, train, self.labels, &LogRegConfig::new(l2))
    }

    fn score(&self, model: &LogRegModel, emb: &Embeddings, ids: &[NodeId]) -> Result<Metrics> {
        let gold: Vec<Vec<u32>> = ids.iter().map(|&v| self.labels.labels(v).to_vec()).collect();
        let counts: Vec<usize> = gold.iter().map(Vec::len).collect();
        let mode = if !self.labels.is_multi_label() {
            PredictMode::SingleLabel
        } else {
            match self.cfg.multi_label {
                MultiLabelRule::TopL => PredictMode::TopL(&counts),
                MultiLabelRule::Threshold(t) => PredictMode::Threshold(t),
            }
        };
        let pred = predict(model, emb, ids, mode)?;
        Ok(metrics(&pred, &gold, self.labels.num_classes()))
    }

    /// Mean micro-F1 over folds of `train`, fold `f` holding every
    /// `folds`-th node of a fixed shuffle.
    fn cross_validate(&self, emb: &Embeddings, order: &[NodeId], folds: usize) -> Result<f64> {
        let mut total = 0.0;
        for f in 0..folds {
            let (mut fit_ids, mut held) = (Vec::new(), Vec::new());
            for (i, &v) in order.iter().enumerate() {
                if i % folds == f {
                    held.push(v);
                } else {
                    fit_ids.push(v);
                }
            }
            let model = self.fit(emb, &fit_ids)?;
            total += self.score(&model, emb, &held)?.micro_f1;
        }
        Ok(total / folds as f64)
    }
}

/// Picks an epoch per split and reports test metrics at that epoch.
/// Citation splits select by validation accuracy, fraction splits by
/// cross-validated micro-F1 on the training nodes; ties go to the
/// earliest epoch.
pub fn evaluate_run(
    snapshots: &[Snapshot],
    splits: &[EvalSplit],
    labels: &LabelTable,
    dataset: &str,
    cfg: &EvalConfig,
) -> Result<Report> {
    if snapshots.is_empty() {
        return Err(Error::Config("no embedding snapshots to evaluate".into()));
    }
    let protocol = splits.first().ok_or_else(|| Error::Config("no evaluation splits".into()))?.protocol;
    if splits.iter().any(|s| s.protocol != protocol) {
        return Err(Error::Config("splits mix evaluation protocols".into()));
    }
    let scorer = Scorer { labels, cfg };
    let rows = splits
        .par_iter()
        .enumerate()
        .map(|(i, split)| -> Result<SplitResult> {
            let mut best: Option<(f64, usize)> = None;
            if snapshots.len() > 1 {
                let order = match protocol {
                    Protocol::Fraction => {
                        let mut o = split.train.clone();
                        o.shuffle(&mut keyed_rng(cfg.seed, Domain::Split, 2, i as u64));
                        o
                    }
                    Protocol::Citation => Vec::new(),
                };
                for (s, snap) in snapshots.iter().enumerate() {
                    let criterion = match protocol {
                        Protocol::Citation => {
                            if split.val.is_empty() {
                                return Err(Error::Config(format!("split {i} has no validation nodes")));
                            }
                            let model = scorer.fit(&snap.embeddings, &split.train)?;
                            scorer.score(&model, &snap.embeddings, &split.val)?.accuracy
                        }
                        Protocol::Fraction => {
                            let folds = cfg.folds.min(order.len());
                            if folds < 2 {
                                0.0
                            } else {
                                scorer.cross_validate(&snap.embeddings, &order, folds)?
                            }
                        }
                    };
                    if best.is_none_or(|(b, _)| criterion > b) {
                        best = Some((criterion, s));
                    }
                }
            }
            let chosen = best.map_or(0, |(_, s)| s);
            let snap = &snapshots[chosen];
            let model = scorer.fit(&snap.embeddings, &split.train)?;
            Ok(SplitResult {
                split: i,
                epoch_selected: snap.epoch,
                test: scorer.score(&model, &snap.embeddings, &split.test)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Report { protocol, dataset: dataset.to_string(), rows })
}
