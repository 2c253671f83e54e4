//! Deterministic seed derivation.
//!
//! Sub-seeds are derived from a root seed plus an index so that per-sample
//! outcomes do not depend on batch partitioning or processing order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer; good avalanche, stable across platforms.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the sub-seed for item `index` under `root`.
pub fn derive(root: u64, index: u64) -> u64 {
    splitmix64(root ^ splitmix64(index.wrapping_add(1)))
}

/// A seeded RNG for one (root, index) slot.
pub fn rng_for(root: u64, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive(root, index))
}

/// A seeded RNG from a bare seed.
pub fn rng_from(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}
