//! Deterministic RNG substreams.
//!
//! Every random quantity is drawn from a ChaCha stream keyed by the master
//! seed and a small integer path, so results never depend on the order in
//! which realizations or user/BS pairs are generated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a seed with an index path into a new 64-bit seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(seed), |acc, &p| {
        splitmix(acc ^ splitmix(p.wrapping_add(GOLDEN)))
    })
}

pub fn substream(seed: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, path))
}

/// Stream tags keep independent uses of the same seed apart.
pub mod tag {
    pub const REALIZATION: u64 = 1;
    pub const USERS: u64 = 2;
    pub const CHANNEL: u64 = 3;
}
