//! Counter-based random streams.
//!
//! Every random decision in the toolkit draws from a ChaCha stream keyed by
//! `(seed, domain, key)` and selected by a stream id, so the value drawn for
//! a given walk, pair or epoch never depends on scheduling or on how many
//! other draws happened before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Walk = 1,
    Target = 2,
    Negative = 3,
    Shuffle = 4,
    Init = 5,
    Inductive = 6,
    Split = 7,
    Synthetic = 8,
}

pub fn keyed_rng(seed: u64, domain: Domain, key: u64, stream: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    bytes[16..24].copy_from_slice(&key.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(bytes);
    rng.set_stream(stream);
    rng
}
