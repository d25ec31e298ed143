//! Deterministic derivation of RNG streams.
//!
//! Every random quantity in the crate is drawn from a [`ChaCha8Rng`] whose
//! seed is a pure function of a master seed and the coordinates of the work
//! item (trial, household, outage level, run). Results therefore do not depend
//! on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of coordinates into a child seed.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(mix64(master ^ GOLDEN), |acc, &c| {
        mix64(acc.wrapping_add(GOLDEN) ^ mix64(c.wrapping_add(GOLDEN)))
    })
}

/// FNV-1a, used to turn household ids into seed coordinates.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn rng_for(master: u64, coords: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, coords))
}

/// RNG for trial `index` of a Monte Carlo experiment: one ChaCha stream per
/// trial under a common key.
pub fn trial_rng(base: &ChaCha8Rng, index: u64) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(index);
    rng.set_word_pos(0);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_differ_by_coordinate() {
        let a = derive_seed(7, &[1, 2]);
        let b = derive_seed(7, &[2, 1]);
        let c = derive_seed(8, &[1, 2]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, &[1, 2]));
    }

    #[test]
    fn trial_streams_are_independent_of_access_order() {
        let base = ChaCha8Rng::seed_from_u64(42);
        let mut used = base.clone();
        let _: u64 = used.random();
        let x: f64 = trial_rng(&base, 3).random();
        let y: f64 = trial_rng(&used, 3).random();
        assert_eq!(x, y);
        let z: f64 = trial_rng(&base, 4).random();
        assert_ne!(x, z);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(hash_str(""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(hash_str("a"), 0xaf63_dc4c_8601_ec8c);
    }
}
