//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`Prng`], ChaCha with 8 rounds
//! (`rand_chacha::ChaCha8Rng`). ChaCha is a counter-based generator with a
//! 64-bit block counter and a 64-bit stream id, and its output is specified
//! independently of the host platform, so a seed reproduces the same draws
//! everywhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Prng = ChaCha8Rng;

/// Generator for `seed` on stream 0.
pub fn prng(seed: u64) -> Prng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for `seed` on an independent stream, used to keep unrelated
/// consumers (graph sampling, parameter init, shuffling) from sharing draws.
pub fn prng_stream(seed: u64, stream: u64) -> Prng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) mod streams {
    pub const GRAPH: u64 = 1;
    pub const FEATURES: u64 = 2;
    pub const INIT: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const SPLIT: u64 = 5;
}
