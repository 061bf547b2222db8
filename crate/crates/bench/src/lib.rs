//! Fixtures shared by the benchmarks.

use c2ne_core::capsule::CapsuleParams;
use c2ne_core::{FeatureSource, FeatureTable, NodeId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random parameters over `nodes` nodes. With `active = Some(a)`, feature
/// rows are binary with `a` ones out of `d`, like bag-of-words input.
pub fn params(
    nodes: usize,
    positions: usize,
    d: usize,
    k: usize,
    active: Option<usize>,
    seed: u64,
) -> CapsuleParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = match active {
        None => {
            let data = (0..nodes * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            FeatureTable::from_rows(d, data, FeatureSource::Learned).unwrap()
        }
        Some(a) => {
            let mut data = vec![0.0; nodes * d];
            for row in data.chunks_exact_mut(d) {
                for _ in 0..a {
                    row[rng.gen_range(0..d)] = 1.0;
                }
            }
            FeatureTable::from_rows(d, data, FeatureSource::GivenFixed).unwrap()
        }
    };
    let bound = 1.0 / (k as f64).sqrt();
    let transforms =
        (0..positions).map(|_| (0..d * k).map(|_| rng.gen_range(-bound..bound)).collect()).collect();
    let embeddings = (0..nodes * k).map(|_| rng.gen_range(-bound..bound)).collect();
    CapsuleParams::from_parts(features, k, transforms, embeddings).unwrap()
}

/// A context of `len` distinct-ish random nodes.
pub fn context(nodes: usize, len: usize, seed: u64) -> Vec<NodeId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(0..nodes as NodeId)).collect()
}
