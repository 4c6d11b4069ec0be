//! Reproducible random streams.
//!
//! A stream is identified by `(seed, stream_id)`; substreams are derived by
//! hashing a child index into the stream id, so any tree of independent
//! generators can be rebuilt from the root seed alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Root stream of a seed.
    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    /// Independent child stream.
    pub fn substream(&self, child: u64) -> Self {
        let mixed = splitmix64(self.stream_id ^ splitmix64(child.wrapping_add(0x243f_6a88_85a3_08d3)));
        Self::new(self.seed, mixed)
    }

    /// Child stream keyed by two indices, e.g. `(level, quadrature node)`.
    pub fn substream2(&self, a: u64, b: u64) -> Self {
        self.substream(a).substream(b)
    }

    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
