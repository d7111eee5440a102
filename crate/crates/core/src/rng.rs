//! Seed derivation for independent, reproducible random streams.
//!
//! Every stochastic component draws from its own ChaCha stream keyed by the
//! run seed plus a purpose tag, so adding a draw in one place never shifts
//! the numbers seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const TAG_GEOMETRY: u64 = 0x6765_6f6d;
pub(crate) const TAG_DATA: u64 = 0x6461_7461;
pub(crate) const TAG_PARTITION: u64 = 0x7061_7274;
pub(crate) const TAG_INIT: u64 = 0x696e_6974;
pub(crate) const TAG_LOCAL: u64 = 0x6c6f_636c;
pub(crate) const TAG_REDRAW: u64 = 0x7265_6472;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a sequence of tags into a single 64-bit seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}
