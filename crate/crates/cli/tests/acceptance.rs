//! Acceptance criteria. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 6 and 7 need the Cora citation dataset. Point `C2NE_CORA_DIR`
//! at a directory holding either `cora.content` + `cora.cites` or
//! `cora.edges` + `cora.features` + `cora.labels`. Without it those lines
//! read FAIL (blocked) and the run does not abort on them.
//! `C2NE_SKIP_SURROGATE=1` skips the informational synthetic desk run.

#![allow(clippy::needless_range_loop)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use c2ne_core::capsule::{
    backward, forward_context, route, squash, CapsuleParams, RoutingConfig, RoutingRule,
};
use c2ne_core::datasets::load_citation_dataset;
use c2ne_core::eval::{make_citation_splits, make_fraction_splits, metrics, EvalConfig, EvalSplit, Snapshot};
use c2ne_core::graph::{init_learned_features, load_edge_list, load_features, load_labels};
use c2ne_core::inductive::{inductive_pairs, infer_embedding, infer_embeddings, InductiveConfig};
use c2ne_core::math::{dot, norm};
use c2ne_core::synthetic::{two_block_graph, CitationLike};
use c2ne_core::trainer::{sampled_softmax_loss, NegativeDistribution, SoftmaxMode, TrainConfig, Trainer};
use c2ne_core::{
    evaluate_run, Embeddings, FeatureSource, FeatureTable, Graph, LabelTable, NodeId, TargetStrategy,
    WalkConfig,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Status {
    Pass,
    Fail,
    /// Not evaluable in this environment; reported as FAIL.
    Blocked,
}

struct Outcome {
    id: u8,
    status: Status,
    detail: String,
}

fn outcome(id: u8, ok: bool, detail: String) -> Outcome {
    let status = if ok { Status::Pass } else { Status::Fail };
    Outcome { id, status, detail }
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()
}

/// Process CPU seconds (all threads).
fn cpu_seconds() -> f64 {
    let stat = fs::read_to_string("/proc/self/stat").unwrap_or_default();
    let after = stat.rsplit_once(')').map_or("", |(_, r)| r);
    let f: Vec<f64> = after.split_whitespace().map(|t| t.parse().unwrap_or(0.0)).collect();
    // utime and stime are fields 14 and 15 in clock ticks of 1/100 s
    f.get(11).zip(f.get(12)).map_or(f64::NAN, |(u, s)| (u + s) / 100.0)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for instance in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(instance);
        let q = rng.gen_range(3..=10);
        let d = rng.gen_range(2..=8);
        let k = rng.gen_range(2..=8);
        let m = [1, 3, 5][rng.gen_range(0..3)];
        let rule = if instance % 2 == 0 { RoutingRule::Ours } else { RoutingRule::Sabour };
        let positions = q - 1;
        let nodes = positions + 2;
        let feats =
            FeatureTable::from_rows(d, rand_vec(&mut rng, nodes * d, 1.0), FeatureSource::Learned).unwrap();
        let transforms = (0..positions).map(|_| rand_vec(&mut rng, d * k, 1.0)).collect();
        let mut params = CapsuleParams::from_parts(feats, k, transforms, vec![0.0; nodes * k]).unwrap();
        let context: Vec<NodeId> = (0..positions).map(|_| rng.gen_range(0..nodes as NodeId)).collect();
        let upstream = rand_vec(&mut rng, k, 1.0);
        let cfg = RoutingConfig::new(m, rule);

        let trace = forward_context(&context, &params, &cfg).unwrap();
        let grads = backward(&trace, &params, &cfg, &upstream).unwrap();
        let objective =
            |p: &CapsuleParams| dot(&forward_context(&context, p, &cfg).unwrap().output, &upstream);
        let mut check = |analytic: f64, fd: f64| {
            let err = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(err);
        };

        for i in 0..positions {
            let dense = grads.transforms[i].to_dense();
            for j in 0..d * k {
                let orig = params.transform(i)[j];
                params.transforms_mut()[i][j] = orig + h;
                let plus = objective(&params);
                params.transforms_mut()[i][j] = orig - h;
                let minus = objective(&params);
                params.transforms_mut()[i][j] = orig;
                check(dense[j], (plus - minus) / (2.0 * h));
            }
        }
        let mut feature_grad = vec![0.0; nodes * d];
        for (v, g) in grads.features.unwrap() {
            for (acc, x) in feature_grad[v as usize * d..(v as usize + 1) * d].iter_mut().zip(g) {
                *acc += x;
            }
        }
        for j in 0..nodes * d {
            let orig = params.features().as_slice()[j];
            params.features_mut().values_mut().unwrap()[j] = orig + h;
            let plus = objective(&params);
            params.features_mut().values_mut().unwrap()[j] = orig - h;
            let minus = objective(&params);
            params.features_mut().values_mut().unwrap()[j] = orig;
            check(feature_grad[j], (plus - minus) / (2.0 * h));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        1,
        worst <= 1e-4 && secs < 60.0,
        format!("gradient check, 100 instances: max rel error {worst:.2e} (<= 1e-4), {secs:.1}s (< 60s)"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut max_angle, mut max_norm_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..10_000 {
        let dim = rng.gen_range(1..=16);
        let scale = 10f64.powf(rng.gen_range(-4.0..4.0));
        let x = rand_vec(&mut rng, dim, scale);
        let n = norm(&x);
        if n == 0.0 {
            continue;
        }
        let s = squash(&x);
        let ns = norm(&s);
        let a: Vec<f64> = x.iter().map(|v| v / n).collect();
        let b: Vec<f64> = s.iter().map(|v| v / ns).collect();
        let cos = dot(&a, &b);
        let perp: Vec<f64> = b.iter().zip(&a).map(|(bi, ai)| bi - cos * ai).collect();
        max_angle = max_angle.max(norm(&perp).atan2(cos));
        max_norm_err = max_norm_err.max((ns - n * n / (1.0 + n * n)).abs());
    }
    let zero = squash(&[0.0; 5]) == vec![0.0; 5];
    outcome(
        2,
        max_angle <= 1e-10 && max_norm_err <= 1e-10 && zero,
        format!("squash: max angle {max_angle:.1e}, max norm error {max_norm_err:.1e} (<= 1e-10), squash(0)=0: {zero}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut sum_err, mut rule_gap): (f64, f64) = (0.0, 0.0);
    let mut negative = false;
    let mut single_exact = true;
    for _ in 0..2000 {
        let n = rng.gen_range(1..=10);
        let k = rng.gen_range(2..=8);
        let uhat: Vec<Vec<f64>> = (0..n).map(|_| rand_vec(&mut rng, k, 2.0)).collect();
        for rule in [RoutingRule::Ours, RoutingRule::Sabour] {
            let m = rng.gen_range(1..=7);
            let (e, trace) = route(&uhat, &RoutingConfig::new(m, rule)).unwrap();
            for c in &trace.coefficients {
                sum_err = sum_err.max((c.iter().sum::<f64>() - 1.0).abs());
                negative |= c.iter().any(|&x| x < 0.0);
            }
            if n == 1 {
                single_exact &= e == squash(&uhat[0]);
            }
        }
        let (a, _) = route(&uhat, &RoutingConfig::new(1, RoutingRule::Ours)).unwrap();
        let (b, _) = route(&uhat, &RoutingConfig::new(1, RoutingRule::Sabour)).unwrap();
        rule_gap = rule_gap.max(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
    }
    outcome(
        3,
        sum_err <= 1e-9 && !negative && rule_gap <= 1e-12 && single_exact,
        format!(
            "routing: max |sum c - 1| {sum_err:.1e} (<= 1e-9), rules at m=1 differ by {rule_gap:.1e} (<= 1e-12), single capsule exact: {single_exact}"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut min_loss = f64::INFINITY;
    for _ in 0..1000 {
        let nodes = rng.gen_range(2..40);
        let k = rng.gen_range(1..9);
        let emb = rand_vec(&mut rng, nodes * k, 3.0);
        let out = rand_vec(&mut rng, k, 1.0);
        let mut ids: Vec<NodeId> = (0..nodes as NodeId).collect();
        ids.shuffle(&mut rng);
        let neg = rng.gen_range(1..nodes);
        let r = sampled_softmax_loss(&out, ids[0], &ids[1..=neg], &emb, SoftmaxMode::IncludePositive);
        min_loss = min_loss.min(r.loss);
    }
    let mut uniform_err: f64 = 0.0;
    for n in [1usize, 2, 7, 255] {
        let k = 4;
        let emb: Vec<f64> = (0..=n).flat_map(|_| [0.3, -0.1, 0.5, 0.2]).collect();
        let negs: Vec<NodeId> = (1..=n as NodeId).collect();
        let r =
            sampled_softmax_loss(&[1.0, 2.0, -0.5, 0.25][..k], 0, &negs, &emb, SoftmaxMode::IncludePositive);
        uniform_err = uniform_err.max((r.loss - ((n + 1) as f64).ln()).abs());
    }
    let mut finite = true;
    for (pos, other) in [(700.0, -700.0), (-700.0, 700.0), (700.0, 700.0), (-700.0, -700.0)] {
        let emb = vec![pos, other, other];
        let r = sampled_softmax_loss(&[1.0], 0, &[1, 2], &emb, SoftmaxMode::IncludePositive);
        finite &= r.loss.is_finite() && r.d_output.iter().all(|g| g.is_finite());
    }
    outcome(
        4,
        min_loss >= 0.0 && uniform_err <= 1e-9 && finite,
        format!(
            "sampled softmax: min loss {min_loss:.2e} (>= 0), equal-logit error {uniform_err:.1e} (<= 1e-9), finite at |logit| 700: {finite}"
        ),
    )
}

fn toy_config(m: usize, rule: RoutingRule, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        batch_size: 32,
        num_negatives: 16,
        epochs: 10,
        embedding_dim: 8,
        walk: WalkConfig { walks_per_node: 16, walk_length: 6, targets: TargetStrategy::RotateAll, seed },
        routing: RoutingConfig::new(m, rule),
        softmax: SoftmaxMode::IncludePositive,
        negatives: NegativeDistribution::Uniform,
        deterministic: true,
        seed,
    }
}

fn all_ids(n: usize) -> Vec<NodeId> {
    (0..n as NodeId).collect()
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let seed = 1;
    let (graph, labels) = two_block_graph(40, 0.5, 0.02, seed).unwrap();
    let feats = init_learned_features(40, 8, seed).unwrap();
    let mut trainer = Trainer::new(&graph, feats, toy_config(3, RoutingRule::Ours, seed)).unwrap();
    for _ in 0..10 {
        trainer.run_epoch().unwrap();
    }
    let losses: Vec<f64> = trainer.loss_log().iter().map(|l| l.mean_loss).collect();
    let decreases = losses.windows(2).filter(|w| w[1] < w[0]).count();
    let emb = Embeddings::from_table(8, trainer.params().embeddings(), &all_ids(40)).unwrap();
    let splits = make_fraction_splits(&labels, 0.5, 5, seed).unwrap();
    let snaps = [Snapshot { epoch: 10, embeddings: emb }];
    let report = evaluate_run(&snaps, &splits, &labels, "two-block", &EvalConfig::default()).unwrap();
    let acc = report.mean().accuracy;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        5,
        decreases >= 8 && acc >= 0.90 && secs < 60.0,
        format!(
            "toy graph: loss decreased in {decreases}/9 epoch transitions (>= 8), held-out accuracy {acc:.3} (>= 0.90), {secs:.1}s"
        ),
    )
}

struct Cora {
    graph: Graph,
    features: FeatureTable,
    labels: LabelTable,
}

fn load_cora() -> Result<Cora, String> {
    let dir = std::env::var_os("C2NE_CORA_DIR")
        .map(PathBuf::from)
        .ok_or("dataset absent, C2NE_CORA_DIR not set")?;
    let open = |name: &str| {
        fs::File::open(dir.join(name))
            .map(std::io::BufReader::new)
            .map_err(|e| format!("{}: {e}", dir.join(name).display()))
    };
    if dir.join("cora.content").exists() {
        let ds =
            load_citation_dataset(open("cora.content")?, open("cora.cites")?).map_err(|e| e.to_string())?;
        return Ok(Cora { graph: ds.graph, features: ds.features, labels: ds.labels });
    }
    let graph = load_edge_list(open("cora.edges")?).map_err(|e| e.to_string())?;
    let text = fs::read_to_string(dir.join("cora.features")).map_err(|e| e.to_string())?;
    let dim = text
        .lines()
        .filter_map(|l| l.split_whitespace().nth(1)?.parse::<usize>().ok())
        .max()
        .map_or(1, |m| m + 1);
    let features = load_features(text.as_bytes(), graph.num_nodes(), dim).map_err(|e| e.to_string())?;
    let labels = load_labels(open("cora.labels")?).map_err(|e| e.to_string())?;
    Ok(Cora { graph, features, labels })
}

/// Desk-scale citation configuration; the learning rate is raised from
/// the full-scale 1e-4, which underfits in 10 epochs of T=8 walks.
fn desk_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        batch_size: 64,
        num_negatives: 256,
        epochs: 10,
        embedding_dim: 128,
        walk: WalkConfig {
            walks_per_node: 8,
            walk_length: 10,
            targets: TargetStrategy::FixedIndexes(vec![3, 4, 5, 6]),
            seed,
        },
        routing: RoutingConfig::new(1, RoutingRule::Ours),
        softmax: SoftmaxMode::IncludePositive,
        negatives: NegativeDistribution::Uniform,
        deterministic: true,
        seed,
    }
}

/// Trains the desk configuration and scores every epoch snapshot on
/// three citation splits. Returns (mean test accuracy, CPU seconds).
fn transductive_run(graph: &Graph, features: FeatureTable, labels: &LabelTable) -> (f64, f64) {
    let cpu = cpu_seconds();
    let cfg = desk_config(1);
    let k = cfg.embedding_dim;
    let mut trainer = Trainer::new(graph, features, cfg).unwrap();
    let ids = all_ids(graph.num_nodes());
    let mut snaps = Vec::new();
    for epoch in 1..=10 {
        trainer.run_epoch().unwrap();
        let embeddings = Embeddings::from_table(k, trainer.params().embeddings(), &ids).unwrap();
        snaps.push(Snapshot { epoch, embeddings });
    }
    let splits = make_citation_splits(labels, 20, 1000, 1000, 3, 1).unwrap();
    let report = evaluate_run(&snaps, &splits, labels, "cora", &EvalConfig::default()).unwrap();
    (report.mean().accuracy, cpu_seconds() - cpu)
}

fn criterion_6(cora: &Result<Cora, String>) -> Outcome {
    let cora = match cora {
        Ok(c) => c,
        Err(e) => {
            return Outcome {
                id: 6,
                status: Status::Blocked,
                detail: format!("Cora transductive: blocked, {e}"),
            }
        }
    };
    let (acc, cpu) = transductive_run(&cora.graph, cora.features.clone(), &cora.labels);
    outcome(
        6,
        acc >= 0.70 && cpu <= 600.0,
        format!("Cora transductive: mean test accuracy {acc:.4} (>= 0.70), {cpu:.0} CPU-s (<= 600)"),
    )
}

/// Checks the inductive invariants on a small fixed-feature model.
fn inductive_invariants() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 30;
    let edges: Vec<(NodeId, NodeId)> =
        (0..n as NodeId).flat_map(|i| [(i, (i + 1) % n as NodeId), (i, (i + 7) % n as NodeId)]).collect();
    let graph = Graph::from_edges(n, &edges).unwrap();
    let q = 6;
    let (d, k) = (5, 4);
    let feats =
        FeatureTable::from_rows(d, rand_vec(&mut rng, n * d, 1.0), FeatureSource::GivenFixed).unwrap();
    let transforms = (0..q - 1).map(|_| rand_vec(&mut rng, d * k, 1.0)).collect();
    let params =
        CapsuleParams::from_parts(feats.clone(), k, transforms, rand_vec(&mut rng, n * k, 1.0)).unwrap();
    let mut mean_exact = true;
    let mut single_exact = true;
    let mut max_norm: f64 = 0.0;
    for rule in [RoutingRule::Ours, RoutingRule::Sabour] {
        let routing = RoutingConfig::new(3, rule);
        for v in 0..n as NodeId {
            let cfg = InductiveConfig { samples: 10, walk_length: q, seed: 11 };
            let out = infer_embedding(&params, &feats, &graph, v, &routing, &cfg).unwrap();
            let pairs = inductive_pairs(&graph, v, &cfg).unwrap();
            let mut mean = vec![0.0; k];
            for p in &pairs {
                let e = forward_context(&p.context, &params, &routing).unwrap().output;
                mean.iter_mut().zip(&e).for_each(|(m, x)| *m += x);
            }
            mean.iter_mut().for_each(|m| *m /= pairs.len() as f64);
            mean_exact &= out == mean;
            max_norm = max_norm.max(norm(&out));

            let one = InductiveConfig { samples: 1, ..cfg };
            let single = infer_embedding(&params, &feats, &graph, v, &routing, &one).unwrap();
            let pair = &inductive_pairs(&graph, v, &one).unwrap()[0];
            single_exact &= single == forward_context(&pair.context, &params, &routing).unwrap().output;
        }
    }
    let ok = mean_exact && single_exact && max_norm < 1.0;
    (
        ok,
        format!("mean of Z outputs exact: {mean_exact}, Z=1 equals one pass: {single_exact}, max norm {max_norm:.4} (< 1)"),
    )
}

/// Trains without the test nodes of one citation split, infers them, and
/// returns (test accuracy, best constant-prediction accuracy).
fn inductive_run(cora: &Cora) -> (f64, f64) {
    let split = make_citation_splits(&cora.labels, 20, 1000, 1000, 1, 1).unwrap().remove(0);
    let mut keep = vec![true; cora.graph.num_nodes()];
    for &v in &split.test {
        keep[v as usize] = false;
    }
    let (sub, original) = cora.graph.induced_subgraph(&keep).unwrap();
    let cfg = desk_config(1);
    let (k, q, routing) = (cfg.embedding_dim, cfg.walk.walk_length, cfg.routing);
    let mut trainer = Trainer::new(&sub, cora.features.select_rows(&original), cfg).unwrap();
    for _ in 0..10 {
        trainer.run_epoch().unwrap();
    }
    let params = trainer.into_params();
    let inferred = infer_embeddings(
        &params,
        &cora.features,
        &cora.graph,
        &split.test,
        &routing,
        &InductiveConfig::new(q, 1),
    )
    .unwrap();
    let mut ids = original.clone();
    ids.extend_from_slice(&split.test);
    let mut data = params.embeddings().to_vec();
    data.extend(inferred.into_iter().flatten());
    let embeddings = Embeddings::new(k, ids, data).unwrap();
    let report = evaluate_run(
        &[Snapshot { epoch: 10, embeddings }],
        std::slice::from_ref(&split),
        &cora.labels,
        "cora-inductive",
        &EvalConfig::default(),
    )
    .unwrap();
    let mut counts = vec![0usize; cora.labels.num_classes()];
    for &v in &split.test {
        counts[cora.labels.labels(v)[0] as usize] += 1;
    }
    let majority = *counts.iter().max().unwrap() as f64 / split.test.len() as f64;
    (report.mean().accuracy, majority)
}

fn criterion_7(cora: &Result<Cora, String>) -> Outcome {
    let (inv_ok, inv) = inductive_invariants();
    match cora {
        Err(e) => Outcome {
            id: 7,
            status: if inv_ok { Status::Blocked } else { Status::Fail },
            detail: format!("inductive: {inv}; Cora run blocked, {e}"),
        },
        Ok(cora) => {
            let (acc, majority) = inductive_run(cora);
            outcome(
                7,
                inv_ok && acc > majority,
                format!("inductive: {inv}; Cora test accuracy {acc:.4} (> majority baseline {majority:.4})"),
            )
        }
    }
}

/// Per-class counts by exhaustive enumeration of (node, class) cells.
fn oracle(pred: &[Vec<u32>], gold: &[Vec<u32>], classes: usize) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fn_) = (vec![0u64; classes], vec![0u64; classes], vec![0u64; classes]);
    for (p, g) in pred.iter().zip(gold) {
        for c in 0..classes as u32 {
            match (p.contains(&c), g.contains(&c)) {
                (true, true) => tp[c as usize] += 1,
                (true, false) => fp[c as usize] += 1,
                (false, true) => fn_[c as usize] += 1,
                (false, false) => {}
            }
        }
    }
    let f1 = |t: u64, p: u64, n: u64| {
        if 2 * t + p + n == 0 {
            0.0
        } else {
            2.0 * t as f64 / (2 * t + p + n) as f64
        }
    };
    let micro = f1(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    let macro_ = (0..classes).map(|c| f1(tp[c], fp[c], fn_[c])).sum::<f64>() / classes as f64;
    let exact = pred
        .iter()
        .zip(gold)
        .filter(|(p, g)| (0..classes as u32).all(|c| p.contains(&c) == g.contains(&c)))
        .count();
    (exact as f64 / pred.len() as f64, micro, macro_)
}

/// Single-label scores from a full confusion matrix.
fn confusion_oracle(pred: &[u32], gold: &[u32], classes: usize) -> (f64, f64, f64) {
    let mut cm = vec![vec![0u64; classes]; classes];
    for (&p, &g) in pred.iter().zip(gold) {
        cm[g as usize][p as usize] += 1;
    }
    let diag: u64 = (0..classes).map(|c| cm[c][c]).sum();
    let total = pred.len() as u64;
    let mut macro_ = 0.0;
    for c in 0..classes {
        let row: u64 = cm[c].iter().sum();
        let col: u64 = cm.iter().map(|r| r[c]).sum();
        let denom = row + col;
        macro_ += if denom == 0 { 0.0 } else { 2.0 * cm[c][c] as f64 / denom as f64 };
    }
    let acc = diag as f64 / total as f64;
    // with one label per node, pooled precision and recall both equal accuracy
    (acc, acc, macro_ / classes as f64)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for set in 0..1000 {
        let n = rng.gen_range(1..=30);
        let classes = rng.gen_range(2..=6);
        let (pred, gold): (Vec<Vec<u32>>, Vec<Vec<u32>>) = if set % 2 == 0 {
            let p: Vec<u32> = (0..n).map(|_| rng.gen_range(0..classes as u32)).collect();
            let g: Vec<u32> = (0..n).map(|_| rng.gen_range(0..classes as u32)).collect();
            let m = metrics(
                &p.iter().map(|&x| vec![x]).collect::<Vec<_>>(),
                &g.iter().map(|&x| vec![x]).collect::<Vec<_>>(),
                classes,
            );
            let (a, mi, ma) = confusion_oracle(&p, &g, classes);
            worst =
                worst.max((m.accuracy - a).abs()).max((m.micro_f1 - mi).abs()).max((m.macro_f1 - ma).abs());
            (p.into_iter().map(|x| vec![x]).collect(), g.into_iter().map(|x| vec![x]).collect())
        } else {
            let mut draw = || -> Vec<u32> {
                let mut s: Vec<u32> = (0..classes as u32).filter(|_| rng.gen_bool(0.35)).collect();
                if s.is_empty() && rng.gen_bool(0.8) {
                    s.push(rng.gen_range(0..classes as u32));
                }
                s
            };
            let p: Vec<Vec<u32>> = (0..n).map(|_| draw()).collect();
            let g: Vec<Vec<u32>> = (0..n).map(|_| draw()).collect();
            (p, g)
        };
        let m = metrics(&pred, &gold, classes);
        let (a, mi, ma) = oracle(&pred, &gold, classes);
        worst = worst.max((m.accuracy - a).abs()).max((m.micro_f1 - mi).abs()).max((m.macro_f1 - ma).abs());
    }
    outcome(
        8,
        worst <= 1e-12,
        format!("metrics vs brute-force oracle, 1000 sets: max deviation {worst:.1e} (<= 1e-12)"),
    )
}

fn c2ne(args: &[&str], cwd: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_c2ne"))
        .args(args)
        .current_dir(cwd)
        .env("C2NE_THREADS", "2")
        .env("RUST_LOG", "warn")
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn snapshot_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| {
            let name = e.ok()?.file_name().into_string().ok()?;
            name.ends_with(".emb").then(|| (name.clone(), fs::read(dir.join(&name)).unwrap()))
        })
        .collect();
    files.sort();
    files
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (graph, _) = two_block_graph(40, 0.5, 0.02, 9).unwrap();
    let mut edges = Vec::new();
    graph.write_edge_list(&mut edges).unwrap();
    fs::write(dir.join("toy.edges"), edges).unwrap();
    let common = [
        "train",
        "--edges",
        "toy.edges",
        "--learn-features",
        "8",
        "--k",
        "8",
        "--T",
        "4",
        "--q",
        "6",
        "--neg",
        "8",
        "--batch",
        "16",
        "--lr",
        "0.01",
        "--m",
        "3",
        "--seed",
        "3",
        "--deterministic",
    ];
    let run = |out: &str, extra: &[&str]| {
        let mut args: Vec<&str> = common.to_vec();
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--out-dir", out]);
        c2ne(&args, dir)
    };
    let mut ok = run("a", &["--epochs", "3"]) && run("b", &["--epochs", "3"]) && run("c", &["--epochs", "1"]);
    ok &= c2ne(
        &[
            "train",
            "--edges",
            "toy.edges",
            "--resume",
            "c/checkpoint.c2ne",
            "--epochs",
            "3",
            "--out-dir",
            "d",
        ],
        dir,
    );
    if !ok {
        return outcome(9, false, "determinism: a training command failed".into());
    }
    let a = snapshot_bytes(&dir.join("a"));
    let b = snapshot_bytes(&dir.join("b"));
    let repeat = a.len() == 3 && a == b;
    let d = snapshot_bytes(&dir.join("d"));
    let resumed = d.iter().all(|(name, bytes)| a.iter().any(|(n, x)| n == name && x == bytes))
        && d.iter().any(|(name, _)| name == "epoch_003.emb");
    outcome(
        9,
        repeat && resumed,
        format!(
            "determinism: repeated runs byte-identical ({} snapshots): {repeat}, resumed run matches uninterrupted: {resumed}",
            a.len()
        ),
    )
}

fn max_param_diff(a: &CapsuleParams, b: &CapsuleParams) -> f64 {
    let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let t = a.transforms().iter().zip(b.transforms()).map(|(x, y)| diff(x, y)).fold(0.0, f64::max);
    t.max(diff(a.embeddings(), b.embeddings())).max(diff(a.features().as_slice(), b.features().as_slice()))
}

fn criterion_10() -> Outcome {
    let seed = 1;
    let (graph, _) = two_block_graph(40, 0.5, 0.02, seed).unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for m in [3, 5, 7] {
        let mut trainers: Vec<Trainer> = [RoutingRule::Ours, RoutingRule::Sabour]
            .into_iter()
            .map(|rule| {
                let feats = init_learned_features(40, 8, seed).unwrap();
                Trainer::new(&graph, feats, toy_config(m, rule, seed)).unwrap()
            })
            .collect();
        let mut gap = 0.0;
        for epoch in 1..=10 {
            for t in &mut trainers {
                t.run_epoch().unwrap();
            }
            if epoch == 2 {
                gap = max_param_diff(trainers[0].params(), trainers[1].params());
            }
        }
        let trained = trainers.iter().all(|t| {
            let log = t.loss_log();
            log.iter().all(|l| l.mean_loss.is_finite()) && log[9].mean_loss < log[0].mean_loss
        });
        ok &= gap > 1e-6 && trained;
        parts.push(format!("m={m}: gap {gap:.2e}, both trained {trained}"));
    }
    outcome(10, ok, format!("ablation, max parameter difference at epoch 2 (> 1e-6): {}", parts.join("; ")))
}

/// Desk configuration on a synthetic graph with Cora's size, class count,
/// vocabulary and homophily. Informational only.
fn surrogate() -> String {
    let (graph, features, labels) = CitationLike::cora_sized().generate(1).unwrap();
    let raw =
        Embeddings::from_table(features.dim(), features.as_slice(), &all_ids(graph.num_nodes())).unwrap();
    let splits: Vec<EvalSplit> = make_citation_splits(&labels, 20, 1000, 1000, 3, 1).unwrap();
    let baseline = evaluate_run(
        &[Snapshot { epoch: 0, embeddings: raw }],
        &splits,
        &labels,
        "raw",
        &EvalConfig::default(),
    )
    .unwrap()
    .mean()
    .accuracy;
    let (acc, cpu) = transductive_run(&graph, features, &labels);
    format!(
        "synthetic Cora-sized surrogate (not criterion 6): desk accuracy {acc:.4} vs raw features {baseline:.4}, {cpu:.0} CPU-s"
    )
}

#[test]
fn acceptance_criteria() {
    let cora = load_cora();
    let outcomes = vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(&cora),
        criterion_7(&cora),
        criterion_8(),
        criterion_9(),
        criterion_10(),
    ];
    let mut report = String::from("\n");
    for o in &outcomes {
        let tag = match o.status {
            Status::Pass => "PASS",
            Status::Fail | Status::Blocked => "FAIL",
        };
        report += &format!("{tag} {:>2}  {}\n", o.id, o.detail);
    }
    if std::env::var_os("C2NE_SKIP_SURROGATE").is_none() {
        report += &format!("INFO     {}\n", surrogate());
    }
    let blocked: Vec<u8> =
        outcomes.iter().filter(|o| matches!(o.status, Status::Blocked)).map(|o| o.id).collect();
    let failed: Vec<u8> =
        outcomes.iter().filter(|o| matches!(o.status, Status::Fail)).map(|o| o.id).collect();
    if !blocked.is_empty() {
        report += &format!("blocked by missing data: {blocked:?}\n");
    }
    // Written to the raw handle so the report shows without --nocapture.
    std::io::stderr().write_all(report.as_bytes()).unwrap();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
