//! Deterministic named-stream RNG derivation: every phase of a run draws from
//! its own stream so phases can be reproduced independently of each other.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use sha2::{Digest, Sha256};

/// Derive an independent RNG stream from a run seed and a stream name.
///
/// Same (seed, name) always yields the same stream; distinct names yield
/// streams that are independent for practical purposes.
pub fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}
