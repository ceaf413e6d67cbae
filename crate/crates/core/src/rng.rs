//! Reproducible random streams.
//!
//! A [`RngSpec`] names a `(seed, stream)` pair. Independent work items (a
//! bootstrap draw, a simulation replicate, a block hypothesis) take the
//! substream `index` of that key, so the values they see do not depend on
//! scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: String,
}

impl RngSpec {
    pub fn new(seed: u64, stream: impl Into<String>) -> Self {
        Self {
            seed,
            stream: stream.into(),
        }
    }

    /// A named child stream, e.g. `"sim" -> "sim/benchmark"`.
    pub fn child(&self, label: &str) -> Self {
        Self {
            seed: self.seed,
            stream: format!("{}/{}", self.stream, label),
        }
    }

    /// A child stream keyed by an integer, e.g. a replicate number.
    pub fn child_indexed(&self, label: &str, index: u64) -> Self {
        self.child(&format!("{label}#{index}"))
    }

    fn key(&self) -> [u8; 32] {
        let digest = Sha256::new()
            .chain_update(self.seed.to_le_bytes())
            .chain_update((self.stream.len() as u64).to_le_bytes())
            .chain_update(self.stream.as_bytes())
            .finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        key
    }

    /// Generator for substream `index`.
    pub fn substream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key());
        rng.set_stream(index);
        rng
    }
}
