//! Every stochastic operation takes an explicit generator.
//!
//! The generator is ChaCha8 seeded from a `u64`, which gives the same stream
//! on every platform. Sub-seeds are derived with a SplitMix64 finalizer over
//! `master ^ (ordinal * 0x9E3779B97F4A7C15)` so that inserting new consumers
//! never shifts the seeds of existing ones.

use rand::SeedableRng;

pub type Rng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer over the master seed and an ordinal.
pub fn derive_seed(master: u64, ordinal: u64) -> u64 {
    let mut z = master ^ ordinal.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn derived_seeds_are_distinct_and_stable() {
        let a = derive_seed(7, 0);
        let b = derive_seed(7, 1);
        assert_ne!(a, b);
        assert_eq!(a, derive_seed(7, 0));
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }

    #[test]
    fn seeded_streams_repeat() {
        let mut r1 = seeded(42);
        let mut r2 = seeded(42);
        for _ in 0..16 {
            assert_eq!(r1.next_u64(), r2.next_u64());
        }
    }
}
