//! Seeded random streams. Every stochastic component draws from a
//! ChaCha stream derived from the master seed and a component tag, so runs
//! are reproducible and independent of iteration order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub mod tags {
    pub const INIT: u64 = 1;
    pub const CORPUS: u64 = 2;
    pub const PRETRAIN: u64 = 3;
    pub const TRAIN_RL: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const SYNTH: u64 = 6;
    pub const HOLDOUT: u64 = 7;
}

/// Independent stream `(tag, index)` under `seed`.
pub fn stream(seed: u64, tag: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}
