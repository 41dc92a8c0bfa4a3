//! Seeded random streams keyed by `(seed, domain, indices)`.
//!
//! Every random draw in the pipeline comes from a stream identified by what it
//! is for (e.g. candidate `a` of identity `i`) rather than by call order, so
//! batching and evaluation order never change results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(seed: u64, domain: &str, indices: &[u64]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((domain.len() as u64).to_le_bytes());
    hasher.update(domain.as_bytes());
    for i in indices {
        hasher.update(i.to_le_bytes());
    }
    hasher.finalize().into()
}

pub fn stream(seed: u64, domain: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(seed, domain, indices))
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
