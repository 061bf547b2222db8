use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use c2ne_core::datasets::{load_citation_dataset, write_features, write_labels, write_name_map};
use c2ne_core::embedding::{parse_snapshot_name, snapshot_name, Embeddings};
use c2ne_core::eval::{
    evaluate_run, make_citation_splits, make_fraction_splits, read_splits, write_splits, EvalConfig,
    EvalSplit, MultiLabelRule, Protocol, Snapshot,
};
use c2ne_core::trainer::{write_loss_log, Checkpoint, SoftmaxMode, TrainConfig, Trainer};
use c2ne_core::{
    infer_embeddings, init_learned_features, load_edge_list, load_features, load_labels, sample_walks,
    Corpus, Error, FeatureTable, Graph, InductiveConfig, LabelTable, NodeId, RoutingConfig, WalkConfig,
};
use log::{info, warn};
use serde_json::json;

use crate::args::{EvalArgs, ImportArgs, InferArgs, SplitSizes, SplitsArgs, TrainArgs, WalksArgs};
use crate::manifest::RunManifest;

pub const CHECKPOINT_FILE: &str = "checkpoint.c2ne";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOSS_FILE: &str = "loss.csv";

/// A failure with its exit code: 2 for bad invocations, 1 otherwise.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_context(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

fn with_path<T>(path: &Path, r: c2ne_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| match e {
        Error::Config(_) => CliError::Usage(format!("{}: {e}", path.display())),
        _ => CliError::Runtime(format!("{}: {e}", path.display())),
    })
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(io_context(path))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_context(path))
}

fn read_graph(path: &Path) -> CliResult<Graph> {
    with_path(path, load_edge_list(open(path)?))
}

fn read_labels(path: &Path) -> CliResult<LabelTable> {
    with_path(path, load_labels(open(path)?))
}

fn read_ids(path: &Path) -> CliResult<Vec<NodeId>> {
    let text = fs::read_to_string(path).map_err(io_context(path))?;
    text.split_whitespace()
        .map(|t| t.parse().map_err(|_| CliError::Usage(format!("{}: bad node id {t:?}", path.display()))))
        .collect()
}

/// Loads triplet features; the dimension defaults to one past the largest
/// feature index in the file.
fn read_features(path: &Path, num_nodes: usize, dim: Option<usize>) -> CliResult<FeatureTable> {
    let text = fs::read_to_string(path).map_err(io_context(path))?;
    let dim = match dim {
        Some(d) => d,
        None => text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .filter_map(|l| l.split_whitespace().nth(1)?.parse::<usize>().ok())
            .max()
            .map_or(0, |m| m + 1),
    };
    if dim == 0 {
        return Err(CliError::Usage(format!("{}: cannot infer a feature dimension", path.display())));
    }
    with_path(path, load_features(text.as_bytes(), num_nodes, dim))
}

fn write_with<F>(path: &Path, f: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> c2ne_core::Result<()>,
{
    let mut out = create(path)?;
    with_path(path, f(&mut out))?;
    out.flush().map_err(io_context(path))
}

fn sidecar_manifest(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn finish_manifest(
    manifest: &mut RunManifest,
    inputs: &[&Path],
    outputs: Vec<PathBuf>,
    at: &Path,
) -> CliResult<()> {
    for p in inputs {
        manifest.add_input(p).map_err(io_context(p))?;
    }
    manifest.outputs = outputs;
    manifest.write(at).map_err(io_context(at))
}

pub fn walks(args: &WalksArgs, argv: &[String]) -> CliResult<()> {
    let graph = read_graph(&args.edges)?;
    let cfg = WalkConfig {
        walks_per_node: args.walks_per_node,
        walk_length: args.walk_length,
        targets: c2ne_core::TargetStrategy::RotateAll,
        seed: args.seed,
    };
    let corpus = sample_walks(&graph, &cfg)?;
    info!("{} walks of length {}", corpus.num_walks(), corpus.walk_length());
    match &args.out {
        None => {
            let stdout = io::stdout();
            let mut lock = BufWriter::new(stdout.lock());
            corpus.write(&mut lock)?;
            lock.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        Some(out) => {
            write_with(out, |w| corpus.write(w))?;
            let mut m = RunManifest::new("walks", argv, json!({ "walk": cfg }))
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            finish_manifest(&mut m, &[&args.edges], vec![out.clone()], &sidecar_manifest(out))?;
        }
    }
    Ok(())
}

/// Nodes kept for training: everything except the held-out ids.
fn holdout_ids(args: &TrainArgs) -> CliResult<Option<Vec<NodeId>>> {
    if let Some(p) = &args.holdout {
        return read_ids(p).map(Some);
    }
    if let Some(p) = &args.holdout_split {
        let splits = with_path(p, read_splits(open(p)?))?;
        let split = splits
            .get(args.split_index)
            .ok_or_else(|| CliError::Usage(format!("{} has no split {}", p.display(), args.split_index)))?;
        return Ok(Some(split.test.clone()));
    }
    Ok(None)
}

fn train_config(args: &TrainArgs) -> TrainConfig {
    let mut routing = RoutingConfig::new(args.m, args.rule);
    routing.stop_gradient = args.stop_gradient_routing;
    TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch,
        num_negatives: args.neg,
        epochs: args.epochs,
        embedding_dim: args.k,
        walk: WalkConfig {
            walks_per_node: args.walks_per_node,
            walk_length: args.walk_length,
            targets: args.targets.clone(),
            seed: args.seed,
        },
        routing,
        softmax: if args.exclude_positive {
            SoftmaxMode::ExcludePositive
        } else {
            SoftmaxMode::IncludePositive
        },
        negatives: args.negatives,
        deterministic: args.deterministic,
        seed: args.seed,
    }
}

pub fn train(args: &TrainArgs, argv: &[String]) -> CliResult<()> {
    let full = read_graph(&args.edges)?;
    let full_nodes = full.num_nodes();
    let (graph, node_ids) = match holdout_ids(args)? {
        None => (full, (0..full_nodes as NodeId).collect::<Vec<_>>()),
        Some(held) => {
            let mut keep = vec![true; full_nodes];
            for &v in &held {
                let slot = keep
                    .get_mut(v as usize)
                    .ok_or_else(|| CliError::Usage(format!("held-out node {v} is not in the graph")))?;
                *slot = false;
            }
            let (sub, ids) = full.induced_subgraph(&keep)?;
            info!("held out {} nodes; training on {}", held.len(), sub.num_nodes());
            (sub, ids)
        }
    };
    let isolated = (0..graph.num_nodes() as NodeId).filter(|&v| graph.degree(v) == 0).count();
    if isolated > 0 {
        warn!("{isolated} isolated nodes; their walks repeat the start node");
    }

    let mut trainer = match &args.resume {
        Some(path) => {
            let mut ck = with_path(path, Checkpoint::load(open(path)?))?;
            if ck.node_ids != node_ids {
                return Err(CliError::Usage("checkpoint was trained on a different node set".into()));
            }
            ck.config.epochs = args.epochs;
            ck.config.deterministic |= args.deterministic;
            Trainer::resume(&graph, ck)?
        }
        None => {
            let config = train_config(args);
            let features = match (&args.features, args.learn_features) {
                (Some(p), _) => read_features(p, full_nodes, args.feature_dim)?.select_rows(&node_ids),
                (None, Some(d)) => init_learned_features(graph.num_nodes(), d, args.seed)?,
                (None, None) => {
                    return Err(CliError::Usage("one of --features or --learn-features is required".into()))
                }
            };
            match &args.corpus {
                Some(p) => {
                    let corpus = with_path(p, Corpus::read(open(p)?))?;
                    if corpus.walk_length() != config.walk.walk_length
                        || corpus.walks_per_node() != config.walk.walks_per_node
                        || corpus.num_walks() != graph.num_nodes() * config.walk.walks_per_node
                    {
                        return Err(CliError::Usage(format!(
                            "{}: corpus does not match --T/--q and the graph",
                            p.display()
                        )));
                    }
                    Trainer::with_corpus(&graph, features, config, corpus)?
                }
                None => Trainer::new(&graph, features, config)?,
            }
        }
    };
    if let Some(p) = &args.save_corpus {
        write_with(p, |w| trainer.corpus().write(w))?;
    }

    let dir = &args.out_dir;
    fs::create_dir_all(dir).map_err(io_context(dir))?;
    let k = trainer.params().output_dim();
    let mut outputs = Vec::new();
    let target = trainer.config().epochs;
    info!(
        "{} pairs per epoch, {} nodes, {} edges",
        trainer.num_pairs(),
        graph.num_nodes(),
        graph.num_edges()
    );
    while trainer.epoch() < target {
        trainer.run_epoch()?;
        let epoch = trainer.epoch();
        let emb = Embeddings::from_table(k, trainer.params().embeddings(), &node_ids)?;
        let path = dir.join(snapshot_name(epoch));
        write_with(&path, |w| emb.write(w))?;
        outputs.push(path);
        if args.checkpoint_every_epoch {
            let path = dir.join(format!("epoch_{epoch:03}.ckpt"));
            write_with(&path, |w| trainer.checkpoint(Some(node_ids.clone())).save(w))?;
            outputs.push(path);
        }
    }
    let loss = dir.join(LOSS_FILE);
    write_with(&loss, |w| write_loss_log(trainer.loss_log(), w))?;
    let ckpt = dir.join(CHECKPOINT_FILE);
    write_with(&ckpt, |w| trainer.checkpoint(Some(node_ids.clone())).save(w))?;
    outputs.extend([loss, ckpt]);

    let mut m = RunManifest::new(
        "train",
        argv,
        json!({ "train": trainer.config(), "nodes": graph.num_nodes(), "held_out": full_nodes - graph.num_nodes() }),
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut inputs: Vec<&Path> = vec![&args.edges];
    inputs.extend(args.features.as_deref());
    inputs.extend(args.holdout.as_deref());
    inputs.extend(args.holdout_split.as_deref());
    inputs.extend(args.corpus.as_deref());
    inputs.extend(args.resume.as_deref());
    finish_manifest(&mut m, &inputs, outputs, &dir.join(MANIFEST_FILE))
}

pub fn infer(args: &InferArgs, argv: &[String]) -> CliResult<()> {
    let ck = with_path(&args.checkpoint, Checkpoint::load(open(&args.checkpoint)?))?;
    let graph = read_graph(&args.edges_with_new)?;
    let new_ids = read_ids(&args.new_ids)?;
    let trained: std::collections::HashSet<NodeId> = ck.node_ids.iter().copied().collect();
    if let Some(v) = new_ids.iter().find(|v| trained.contains(v)) {
        return Err(CliError::Usage(format!("node {v} was part of the training graph")));
    }
    if let Some(v) = new_ids.iter().find(|&&v| v as usize >= graph.num_nodes()) {
        return Err(CliError::Usage(format!("node {v} is not in {}", args.edges_with_new.display())));
    }
    let params = &ck.params;
    if params.features().is_learned() {
        return Err(CliError::Usage(
            "the model learned its input features; new nodes need given features".into(),
        ));
    }
    let feature_path = args
        .features
        .as_ref()
        .ok_or_else(|| CliError::Usage("--features is required for this model".into()))?;
    let features = read_features(feature_path, graph.num_nodes(), Some(params.input_dim()))?;
    let cfg =
        InductiveConfig { samples: args.samples, walk_length: ck.config.walk.walk_length, seed: args.seed };
    let rows = infer_embeddings(params, &features, &graph, &new_ids, &ck.config.routing, &cfg)?;
    let k = params.output_dim();
    let inferred = Embeddings::new(k, new_ids.clone(), rows.concat())?;
    let out_emb = if args.merge {
        let mut all = Embeddings::from_table(k, params.embeddings(), &ck.node_ids)?;
        all.extend(&inferred)?;
        all
    } else {
        inferred
    };
    write_with(&args.out, |w| out_emb.write(w))?;
    let mut m = RunManifest::new("infer", argv, json!({ "inductive": cfg, "routing": ck.config.routing }))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    finish_manifest(
        &mut m,
        &[&args.checkpoint, &args.edges_with_new, &args.new_ids, feature_path],
        vec![args.out.clone()],
        &sidecar_manifest(&args.out),
    )
}

fn generate_splits(
    labels: &LabelTable,
    protocol: Protocol,
    gamma: f64,
    count: usize,
    sizes: &SplitSizes,
    seed: u64,
) -> CliResult<Vec<EvalSplit>> {
    Ok(match protocol {
        Protocol::Fraction => make_fraction_splits(labels, gamma, count, seed)?,
        Protocol::Citation => {
            make_citation_splits(labels, sizes.per_class, sizes.n_val, sizes.n_test, count, seed)?
        }
    })
}

pub fn splits(args: &SplitsArgs, argv: &[String]) -> CliResult<()> {
    let labels = read_labels(&args.labels)?;
    let s = generate_splits(&labels, args.protocol, args.gamma, args.count, &args.sizes, args.seed)?;
    write_with(&args.out, |w| write_splits(&s, w))?;
    let mut m = RunManifest::new("splits", argv, json!({ "protocol": args.protocol, "count": args.count }))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    finish_manifest(&mut m, &[&args.labels], vec![args.out.clone()], &sidecar_manifest(&args.out))
}

fn read_snapshots(args: &EvalArgs) -> CliResult<Vec<Snapshot>> {
    if let Some(p) = &args.embeddings {
        return Ok(vec![Snapshot { epoch: 1, embeddings: with_path(p, Embeddings::read(open(p)?))? }]);
    }
    let dir = args.embeddings_dir.as_ref().expect("clap requires one embedding source");
    let mut found: Vec<(usize, PathBuf)> = fs::read_dir(dir)
        .map_err(io_context(dir))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            Some((parse_snapshot_name(&name)?, e.path()))
        })
        .collect();
    if found.is_empty() {
        return Err(CliError::Runtime(format!("{}: no epoch_XXX.emb snapshots", dir.display())));
    }
    found.sort();
    found
        .into_iter()
        .map(|(epoch, p)| Ok(Snapshot { epoch, embeddings: with_path(&p, Embeddings::read(open(&p)?))? }))
        .collect()
}

pub fn eval(args: &EvalArgs, argv: &[String]) -> CliResult<()> {
    let labels = read_labels(&args.labels)?;
    let snapshots = read_snapshots(args)?;
    let mut splits = match &args.splits_file {
        Some(p) => {
            let s = with_path(p, read_splits(open(p)?))?;
            if s.iter().any(|sp| sp.protocol != args.protocol) {
                return Err(CliError::Usage(format!("{} holds splits for another protocol", p.display())));
            }
            s
        }
        None => generate_splits(
            &labels,
            args.protocol,
            args.gamma,
            args.gen_splits.unwrap_or(10),
            &args.sizes,
            args.seed,
        )?,
    };
    if let Some(p) = &args.write_splits {
        write_with(p, |w| write_splits(&splits, w))?;
    }
    if let Some(i) = args.only_split {
        if i >= splits.len() {
            return Err(CliError::Usage(format!("there is no split {i}")));
        }
        splits = vec![splits.swap_remove(i)];
    }
    let cfg = EvalConfig {
        l2: args.l2,
        folds: 10,
        multi_label: args.threshold.map_or(MultiLabelRule::TopL, MultiLabelRule::Threshold),
        seed: args.seed,
    };
    let mut report = evaluate_run(&snapshots, &splits, &labels, &args.dataset, &cfg)?;
    if let Some(i) = args.only_split {
        report.rows[0].split = i;
    }
    write_with(&args.out, |w| report.write_csv(w))?;
    let mean = report.mean();
    info!("mean accuracy {:.4}, micro-F1 {:.4}, macro-F1 {:.4}", mean.accuracy, mean.micro_f1, mean.macro_f1);
    let mut m = RunManifest::new("eval", argv, json!({ "eval": cfg, "protocol": args.protocol }))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut inputs: Vec<&Path> = vec![&args.labels];
    inputs.extend(args.splits_file.as_deref());
    inputs.extend(args.embeddings.as_deref());
    finish_manifest(&mut m, &inputs, vec![args.out.clone()], &sidecar_manifest(&args.out))
}

pub fn import(args: &ImportArgs, argv: &[String]) -> CliResult<()> {
    let ds = with_path(&args.content, load_citation_dataset(open(&args.content)?, open(&args.cites)?))?;
    info!(
        "{} nodes, {} edges, {} features, {} classes ({} citations dropped)",
        ds.graph.num_nodes(),
        ds.graph.num_edges(),
        ds.features.dim(),
        ds.class_names.len(),
        ds.dropped_citations
    );
    fs::create_dir_all(&args.out_dir).map_err(io_context(&args.out_dir))?;
    let path = |ext: &str| args.out_dir.join(format!("{}.{ext}", args.name));
    let outputs = vec![path("edges"), path("features"), path("labels"), path("names"), path("classes")];
    write_with(&outputs[0], |w| ds.graph.write_edge_list(w))?;
    write_with(&outputs[1], |w| write_features(&ds.features, w))?;
    write_with(&outputs[2], |w| write_labels(&ds.labels, w))?;
    write_with(&outputs[3], |w| write_name_map(&ds.node_names, w))?;
    write_with(&outputs[4], |w| write_name_map(&ds.class_names, w))?;
    let mut m = RunManifest::new(
        "import",
        argv,
        json!({ "feature_dim": ds.features.dim(), "dropped_citations": ds.dropped_citations }),
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    let at = args.out_dir.join(format!("{}.manifest.json", args.name));
    finish_manifest(&mut m, &[&args.content, &args.cites], outputs, &at)
}
