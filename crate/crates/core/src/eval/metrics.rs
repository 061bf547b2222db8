//! Accuracy, micro-F1 and macro-F1 over label sets.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    /// Fraction of nodes whose predicted set equals the gold set.
    pub accuracy: f64,
    pub micro_f1: f64,
    /// Unweighted mean of per-class F1. A class with no gold and no
    /// predicted members scores 0.
    pub macro_f1: f64,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

fn normalized(set: &[u32]) -> Vec<u32> {
    let mut s = set.to_vec();
    s.sort_unstable();
    s.dedup();
    s
}

pub fn metrics(pred: &[Vec<u32>], gold: &[Vec<u32>], num_classes: usize) -> Metrics {
    assert_eq!(pred.len(), gold.len(), "prediction and gold lists differ in length");
    if pred.is_empty() {
        return Metrics::default();
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    let mut exact = 0usize;
    for (p, g) in pred.iter().zip(gold) {
        let (p, g) = (normalized(p), normalized(g));
        if p == g {
            exact += 1;
        }
        for &c in &p {
            if g.binary_search(&c).is_ok() {
                tp[c as usize] += 1;
            } else {
                fp[c as usize] += 1;
            }
        }
        for &c in &g {
            if p.binary_search(&c).is_err() {
                fn_[c as usize] += 1;
            }
        }
    }
    let sum = |v: &[usize]| v.iter().sum::<usize>();
    let macro_f1 = if num_classes == 0 {
        0.0
    } else {
        (0..num_classes).map(|c| f1(tp[c], fp[c], fn_[c])).sum::<f64>() / num_classes as f64
    };
    Metrics {
        accuracy: exact as f64 / pred.len() as f64,
        micro_f1: f1(sum(&tp), sum(&fp), sum(&fn_)),
        macro_f1,
    }
}
