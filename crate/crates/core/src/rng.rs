//! Deterministic hierarchical random number streams.
//!
//! A stream is identified by a master seed plus a path of integer labels.
//! The same `(seed, path)` always yields the same draw sequence regardless of
//! platform or thread count, and distinct paths give statistically independent
//! streams. Monte Carlo code derives one stream per logical unit of work
//! (replicate, census, area, subarea), so parallel scheduling never changes
//! results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identity of one deterministic substream: a mixed 64-bit state derived from
/// the master seed and the path of labels taken from the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    state: u64,
}

impl RngStream {
    /// Root stream for a master seed.
    pub fn new(seed: u64) -> Self {
        Self {
            state: mix(seed ^ GOLDEN),
        }
    }

    /// Derive the child stream for one integer label.
    pub fn child(&self, label: u64) -> Self {
        Self {
            state: mix(self.state ^ GOLDEN.wrapping_mul(label.wrapping_add(1))),
        }
    }

    /// Derive the stream at the end of a label path.
    pub fn descend(&self, path: &[u64]) -> Self {
        path.iter().fold(*self, |s, &label| s.child(label))
    }

    /// Materialize the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.state)
    }
}
