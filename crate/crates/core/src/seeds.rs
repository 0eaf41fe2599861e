//! Deterministic sub-seeds. Every random decision in the pipeline draws from
//! a generator keyed by the run seed plus a context path, so results do not
//! depend on evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

pub fn rng(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, parts))
}

/// A uniform draw in `[0, 1)` keyed by `(seed, parts)`.
pub fn unit(seed: u64, parts: &[&str]) -> f64 {
    use rand::Rng;
    rng(seed, parts).random::<f64>()
}
