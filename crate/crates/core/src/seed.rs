//! Seed derivation.
//!
//! Every random stream in the crate is keyed by a base seed plus a short
//! path of integers (environment index, purpose tag, ...), so independent
//! pieces can be generated in any order or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes `path` into `base`.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, path))
}

// Purpose tags.
pub(crate) const TAG_GRAPH: u64 = 1;
pub(crate) const TAG_COEFFS: u64 = 2;
pub(crate) const TAG_VALUES: u64 = 3;
pub(crate) const TAG_SAMPLES: u64 = 4;
pub(crate) const TAG_INIT: u64 = 5;
pub(crate) const TAG_BATCHES: u64 = 6;
pub(crate) const TAG_MIXING: u64 = 7;
pub(crate) const TAG_ICA: u64 = 8;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_separates_paths() {
        assert_ne!(derive(1, &[0]), derive(1, &[1]));
        assert_ne!(derive(1, &[0, 1]), derive(1, &[1, 0]));
        assert_ne!(derive(1, &[]), derive(2, &[]));
        assert_eq!(derive(7, &[3, 4]), derive(7, &[3, 4]));
    }
}
