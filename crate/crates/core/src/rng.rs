//! Named random substreams.
//!
//! Every stochastic component draws from its own ChaCha8 stream whose key is
//! a SHA-256 digest of `(seed, name, indices)`. Streams are therefore
//! portable across platforms and independent of the order in which other
//! components consume randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

pub fn substream(seed: u64, name: &str, indices: &[u64]) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((name.len() as u64).to_le_bytes());
    hasher.update(name.as_bytes());
    for i in indices {
        hasher.update(i.to_le_bytes());
    }
    ChaCha8Rng::from_seed(hasher.finalize().into())
}
