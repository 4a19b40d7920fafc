//! Reproducible random streams.
//!
//! A `(seed, stream)` pair maps to one ChaCha8 keystream: the seed keys the
//! cipher, the stream id selects an independent counter space. Replicate `r`
//! of an experiment uses stream `r` (optionally offset by a per-check tag),
//! so results never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeededRng {
    pub seed: u64,
    pub stream: u64,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Child stream for replicate `index` within family `tag`.
    pub fn replicate(seed: u64, tag: u32, index: u32) -> Self {
        Self { seed, stream: (u64::from(tag) << 32) | u64::from(index) }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}
