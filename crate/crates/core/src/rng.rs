//! Seeded, counter-based random streams.
//!
//! Every random component draws from its own ChaCha stream keyed by
//! `(seed, index)` and selected by a domain tag, so changing how much one
//! component consumes never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream domains. Values are part of the reproducibility contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Matrix = 1,
    Solution = 2,
    Support = 3,
    CorruptionValues = 4,
    Noise = 5,
    Solver = 6,
    SubsetSampling = 7,
    Trial = 8,
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(domain as u64);
    rng
}

/// Derive a child seed, e.g. one per trial of an experiment.
pub fn child_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, domain, index).next_u64()
}
