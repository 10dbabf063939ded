//! Seed derivation.
//!
//! Every random quantity in a run is drawn from its own ChaCha8 stream,
//! derived from one base seed, a [`Purpose`] and an index (block number,
//! mobility event, ...). Changing how one component consumes randomness
//! therefore never perturbs the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// What a derived stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Topology = 1,
    Fading = 2,
    Flips = 3,
    Clustering = 4,
    Mobility = 5,
    Scheduler = 6,
    Estimation = 7,
    MonteCarlo = 8,
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of stream `(purpose, index)` under `base`.
pub fn derive_seed(base: u64, purpose: Purpose, index: u64) -> u64 {
    mix(mix(mix(base) ^ (purpose as u64)) ^ index)
}

pub fn stream(base: u64, purpose: Purpose, index: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, purpose, index))
}

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
