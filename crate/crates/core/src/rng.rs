//! Reproducible random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream addressed by
//! `(master seed, module id, replica id)`. ChaCha is counter-based, so the
//! stream for replica `r` does not depend on how many draws other replicas
//! consumed or on which thread ran them.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Module identifiers used to separate streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u32)]
pub enum Module {
    Env = 1,
    Skorokhod = 2,
    Brownian = 3,
    Meander = 4,
    Bessel = 5,
    Excursion = 6,
    Coupling = 7,
    Varprob = 8,
    Chernoff = 9,
    Experiment = 10,
}

/// Address of one stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub module: Module,
    pub replica: u64,
}

impl StreamKey {
    pub fn new(seed: u64, module: Module, replica: u64) -> Self {
        Self {
            seed,
            module,
            replica,
        }
    }

    /// Child key for a sub-task of this stream (e.g. one value of `n`).
    pub fn child(&self, tag: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ splitmix64(tag.wrapping_add(0x9E37_79B9))),
            module: self.module,
            replica: self.replica,
        }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut key = [0u8; 32];
        let mut state = self.seed;
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(((self.module as u64) << 48) ^ self.replica);
        rng
    }
}

/// Convenience: rng for `(seed, module, replica)`.
pub fn stream(seed: u64, module: Module, replica: u64) -> ChaCha12Rng {
    StreamKey::new(seed, module, replica).rng()
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
