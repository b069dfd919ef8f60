//! Seeded randomness.
//!
//! Every random choice in the crate flows from a [`Seed`]. A seed maps to a
//! ChaCha8 keystream (a counter-based generator), and child seeds are derived
//! by hashing the parent with a key tuple:
//!
//! ```text
//! child = splitmix64-fold(parent, k0, k1, ...)
//! ```
//!
//! The benchmark harness derives one child per `(d, N, epsilon, trial)` and
//! then one grandchild per purpose (sampling, corruption, estimation), so the
//! data a trial sees does not depend on scheduling or on which estimators run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

/// Purpose tags for grandchild seeds inside a trial.
pub mod purpose {
    pub const SAMPLE: u64 = 0x5A4D_504C;
    pub const CORRUPT: u64 = 0xC022_0917;
    pub const ESTIMATE: u64 = 0xE571_4A7E;
    pub const MODEL: u64 = 0x0D0E_1000;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Seed {
    pub const fn new(value: u64) -> Self {
        Seed(value)
    }

    /// Derives a child seed from a key tuple. Order matters.
    pub fn derive(self, keys: &[u64]) -> Seed {
        let mut h = splitmix64(self.0);
        for &k in keys {
            h = splitmix64(h ^ splitmix64(k));
        }
        Seed(h)
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Independent keystream `stream` under the same key.
    pub fn stream(self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(stream);
        rng
    }
}

impl From<u64> for Seed {
    fn from(v: u64) -> Self {
        Seed(v)
    }
}
