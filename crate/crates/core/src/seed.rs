//! Per-replicate random streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator every simulation in this crate is driven by.
pub type SimRng = ChaCha8Rng;

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function; a bijection on `u64`.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replicate `index`: the `index + 1`-th SplitMix64 output of the
/// stream started at `master`. Injective in `index` for a fixed master
/// (below `2^64` replicates) and platform independent.
pub fn seed_derive(master: u64, index: u64) -> u64 {
    mix(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GAMMA)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Generator of replicate `index`.
pub fn replicate_rng(master: u64, index: u64) -> SimRng {
    rng_from_seed(seed_derive(master, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::collections::HashSet;

    #[test]
    fn distinct_neighbours() {
        for s in [0, 1, 42, u64::MAX] {
            assert_ne!(seed_derive(s, 0), seed_derive(s, 1));
        }
    }

    #[test]
    fn no_collisions() {
        let seeds: HashSet<u64> = (0..10_000).map(|i| seed_derive(7, i)).collect();
        assert_eq!(seeds.len(), 10_000);
    }

    #[test]
    fn fixed_values() {
        // first SplitMix64 output for state 0
        assert_eq!(seed_derive(0, 0), 0xe220_a839_7b1d_cdaf);
        let a: u64 = replicate_rng(3, 5).random();
        let b: u64 = replicate_rng(3, 5).random();
        assert_eq!(a, b);
    }
}
