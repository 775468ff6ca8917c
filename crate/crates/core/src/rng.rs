//! Seed derivation.
//!
//! Every random quantity in the crate is drawn from a generator seeded by
//! mixing a user seed with a fixed tag and an index, so results never depend
//! on evaluation order or on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags used by the crate. Kept distinct so that, for example, the
/// Gaussian multipliers of a replicate never share a stream with its trees.
pub mod tag {
    pub const BOOTSTRAP: u64 = 0x6f6f_6273;
    pub const TREE: u64 = 0x7472_6565;
    pub const XI: u64 = 0x0078_6931;
    pub const SUBJECT: u64 = 0x7375_626a;
    pub const FOLDS: u64 = 0x666f_6c64;
    pub const TEST: u64 = 0x7465_7374;
    pub const NODE_LEFT: u64 = 0x6c65_6674;
    pub const NODE_RIGHT: u64 = 0x7269_6768;
    pub const ORACLE: u64 = 0x6f72_6163;
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed`, a stream tag and an index.
#[inline]
pub fn derive(seed: u64, tag: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ mix64(tag)) ^ index)
}

pub fn from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
