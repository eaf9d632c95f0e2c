//! Deterministic seeding.
//!
//! Every stochastic operation in the crate takes a [`Seed`]. Sub-tasks that
//! may run in parallel derive their own seeds from a label and an index, so
//! results never depend on execution order or thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A 64-bit seed for reproducible randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    pub fn value(self) -> u64 {
        self.0
    }

    /// Derive an independent child seed for a named sub-task.
    ///
    /// The derivation is a fixed splitmix-style mix of the parent seed, the
    /// label bytes and the index; it does not depend on hasher state or
    /// platform, so derived streams are stable across runs and builds.
    pub fn derive(self, label: &str, index: u64) -> Seed {
        let mut h = self.0 ^ 0x9e37_79b9_7f4a_7c15;
        for &b in label.as_bytes() {
            h = splitmix(h ^ u64::from(b));
        }
        Seed(splitmix(h ^ index))
    }

    /// A seeded random generator for this seed.
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
