//! Seeded random streams.
//!
//! Every stochastic component draws from a [`ChaCha8Rng`] seeded from a
//! `u64`. Child seeds are derived with [`derive_seed`], a SplitMix64 mix of
//! the parent seed and a counter, so independent runs never share a stream
//! and results do not depend on execution order.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `counter`-th child stream of `seed`.
pub fn derive_seed(seed: u64, counter: u64) -> u64 {
    splitmix64(seed ^ splitmix64(counter.wrapping_add(0x5EED)))
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Well-known stream tags so unrelated consumers of one run seed diverge.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const ENV: u64 = 3;
    pub const POLICY: u64 = 4;
    pub const DROPOUT: u64 = 5;
    pub const DATA: u64 = 6;
}
