//! Deterministic RNG stream derivation for parallel Monte Carlo.
//!
//! Splitting rule: stream `i` of a master seed `m` is
//! `splitmix64(m + i * GOLDEN)` with wrapping arithmetic, where GOLDEN is
//! the 64-bit golden-ratio increment. SplitMix64 is a bijection, so
//! distinct stream indices never collide for a fixed master seed.
//! Each replication derives one seed this way and splits it again into an
//! environment stream (occupancy, gains, fading, harvest) and an action
//! stream (observations, random ranking), so exogenous randomness is
//! identical across policies run from the same master seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `index` under `master`.
pub fn stream_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_mul(GOLDEN)))
}

/// The two per-replication RNG streams.
pub struct SlotRng {
    /// Exogenous randomness: PN evolution, channel gains, sensing-channel
    /// fading, harvest arrivals. Fixed draw count per slot.
    pub env: ChaCha8Rng,
    /// Policy-side randomness: sensing observations, random ranking.
    pub act: ChaCha8Rng,
}

impl SlotRng {
    pub fn for_replication(master: u64, replication: u64) -> Self {
        let rep = stream_seed(master, replication);
        Self {
            env: ChaCha8Rng::seed_from_u64(stream_seed(rep, 0)),
            act: ChaCha8Rng::seed_from_u64(stream_seed(rep, 1)),
        }
    }
}
