#![allow(clippy::needless_range_loop)]

use c2ne_core::capsule::{backward, forward_context, squash, CapsuleParams, RoutingConfig, RoutingRule};
use c2ne_core::eval::{make_citation_splits, make_fraction_splits, metrics};
use c2ne_core::graph::init_learned_features;
use c2ne_core::inductive::{infer_embedding, InductiveConfig};
use c2ne_core::math::{dot, norm};
use c2ne_core::synthetic::two_block_graph;
use c2ne_core::trainer::{sampled_softmax_loss, NegativeDistribution, SoftmaxMode, TrainConfig, Trainer};
use c2ne_core::{
    Embeddings, FeatureSource, FeatureTable, Graph, LabelTable, NodeId, TargetStrategy, WalkConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_model(seed: u64, positions: usize, d: usize, k: usize, nodes: usize) -> CapsuleParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let feats = FeatureTable::from_rows(d, rand_vec(&mut rng, nodes * d), FeatureSource::Learned).unwrap();
    let transforms = (0..positions).map(|_| rand_vec(&mut rng, d * k)).collect();
    CapsuleParams::from_parts(feats, k, transforms, rand_vec(&mut rng, nodes * k)).unwrap()
}

fn rule(sabour: bool) -> RoutingRule {
    if sabour {
        RoutingRule::Sabour
    } else {
        RoutingRule::Ours
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transform_gradients_match_finite_differences(
        seed in any::<u64>(),
        positions in 2usize..8,
        d in 2usize..6,
        k in 2usize..6,
        m in 1usize..6,
        sabour in any::<bool>(),
    ) {
        let nodes = positions + 1;
        let mut params = random_model(seed, positions, d, k, nodes);
        let context: Vec<NodeId> = (0..positions as NodeId).collect();
        let cfg = RoutingConfig::new(m, rule(sabour));
        let upstream: Vec<f64> = (0..k).map(|j| 1.0 - 0.3 * j as f64).collect();
        let trace = forward_context(&context, &params, &cfg).unwrap();
        let grads = backward(&trace, &params, &cfg, &upstream).unwrap();
        let h = 1e-5;
        for i in 0..positions {
            let dense = grads.transforms[i].to_dense();
            for j in 0..d * k {
                let orig = params.transform(i)[j];
                params.transforms_mut()[i][j] = orig + h;
                let plus = dot(&forward_context(&context, &params, &cfg).unwrap().output, &upstream);
                params.transforms_mut()[i][j] = orig - h;
                let minus = dot(&forward_context(&context, &params, &cfg).unwrap().output, &upstream);
                params.transforms_mut()[i][j] = orig;
                let fd = (plus - minus) / (2.0 * h);
                let err = (fd - dense[j]).abs() / fd.abs().max(dense[j].abs()).max(1e-6);
                prop_assert!(err <= 1e-4, "W{i}[{j}]: {} vs {fd}", dense[j]);
            }
        }
    }

    #[test]
    fn squash_keeps_direction_and_bounds_norm(x in prop::collection::vec(-1e3f64..1e3, 1..12)) {
        let s = squash(&x);
        let n = norm(&x);
        prop_assert!(norm(&s) < 1.0);
        prop_assert!((norm(&s) - n * n / (1.0 + n * n)).abs() <= 1e-10);
        prop_assert!(dot(&s, &x) >= 0.0);
    }

    #[test]
    fn softmax_loss_is_nonnegative_and_bounded_by_uniform_at_zero(
        seed in any::<u64>(),
        k in 1usize..8,
        neg in 1usize..20,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb = rand_vec(&mut rng, (neg + 1) * k);
        let out = rand_vec(&mut rng, k);
        let negs: Vec<NodeId> = (1..=neg as NodeId).collect();
        let r = sampled_softmax_loss(&out, 0, &negs, &emb, SoftmaxMode::IncludePositive);
        prop_assert!(r.loss >= 0.0);
        let zero = sampled_softmax_loss(&vec![0.0; k], 0, &negs, &emb, SoftmaxMode::IncludePositive);
        prop_assert!((zero.loss - ((neg + 1) as f64).ln()).abs() < 1e-12);
        let total: f64 = r.coefficients.iter().sum();
        prop_assert!(total.abs() < 1e-12);
    }

    #[test]
    fn single_label_micro_f1_equals_accuracy(
        pairs in prop::collection::vec((0u32..5, 0u32..5), 1..40),
    ) {
        let pred: Vec<Vec<u32>> = pairs.iter().map(|p| vec![p.0]).collect();
        let gold: Vec<Vec<u32>> = pairs.iter().map(|p| vec![p.1]).collect();
        let m = metrics(&pred, &gold, 5);
        prop_assert!((m.micro_f1 - m.accuracy).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&m.macro_f1));
    }

    #[test]
    fn splits_are_disjoint_and_sized(seed in any::<u64>(), gamma in 0.05f64..0.95) {
        let (_, labels) = two_block_graph(60, 0.2, 0.05, seed).unwrap();
        for s in make_fraction_splits(&labels, gamma, 3, seed).unwrap() {
            prop_assert!(s.is_disjoint());
            prop_assert_eq!(s.train.len(), (gamma * 60.0 + 1e-9).floor() as usize);
            prop_assert_eq!(s.train.len() + s.test.len(), 60);
        }
        for s in make_citation_splits(&labels, 5, 10, 20, 2, seed).unwrap() {
            prop_assert!(s.is_disjoint());
            prop_assert_eq!((s.train.len(), s.val.len(), s.test.len()), (10, 10, 20));
        }
    }

    #[test]
    fn embedding_files_round_trip(seed in any::<u64>(), n in 1usize..20, k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * k).map(|_| rng.gen_range(-1e3..1e3)).collect();
        let ids: Vec<NodeId> = (0..n as NodeId).map(|i| i * 3).collect();
        let e = Embeddings::new(k, ids.clone(), data.clone()).unwrap();
        let mut buf = Vec::new();
        e.write(&mut buf).unwrap();
        let back = Embeddings::read(&buf[..]).unwrap();
        prop_assert_eq!(back.ids(), &ids[..]);
        for (row, &id) in ids.iter().enumerate() {
            for (a, b) in back.get(id).unwrap().iter().zip(&data[row * k..(row + 1) * k]) {
                prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn inferred_embeddings_lie_in_the_unit_ball(seed in any::<u64>(), z in 1usize..12) {
        let (graph, _) = two_block_graph(20, 0.4, 0.1, seed).unwrap();
        let q = 4;
        let params = random_model(seed, q - 1, 3, 3, 20);
        let features = params.features().clone();
        let cfg = InductiveConfig { samples: z, walk_length: q, seed };
        for v in 0..20 {
            if graph.degree(v) == 0 {
                continue;
            }
            let e = infer_embedding(&params, &features, &graph, v, &RoutingConfig::new(3, RoutingRule::Ours), &cfg).unwrap();
            prop_assert!(norm(&e) < 1.0);
        }
    }
}

fn toy(deterministic: bool) -> (Graph, LabelTable, TrainConfig) {
    let (graph, labels) = two_block_graph(30, 0.4, 0.05, 4).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.01,
        batch_size: 16,
        num_negatives: 6,
        epochs: 2,
        embedding_dim: 6,
        walk: WalkConfig { walks_per_node: 4, walk_length: 5, targets: TargetStrategy::RotateAll, seed: 4 },
        routing: RoutingConfig::new(3, RoutingRule::Sabour),
        softmax: SoftmaxMode::IncludePositive,
        negatives: NegativeDistribution::Uniform,
        deterministic,
        seed: 4,
    };
    (graph, labels, cfg)
}

#[test]
fn deterministic_training_ignores_thread_count() {
    let (graph, _, cfg) = toy(true);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut t = Trainer::new(&graph, init_learned_features(30, 5, 4).unwrap(), cfg.clone()).unwrap();
            t.run_epoch().unwrap();
            t.run_epoch().unwrap();
            t.into_params()
        })
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.embeddings(), four.embeddings());
    assert_eq!(one.transforms(), four.transforms());
    assert_eq!(one.features().as_slice(), four.features().as_slice());
}
