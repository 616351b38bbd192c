//! Seeded randomness.
//!
//! Every random draw in the crate comes from a ChaCha8 stream
//! (`rand_chacha::ChaCha8Rng::seed_from_u64`), so sketches are reproducible
//! across platforms. Independent sub-streams (one per block, one per retry)
//! get their own seeds from [`derive_seed`], which applies the SplitMix64
//! finalizer to `master + (stream + 1) * 0x9E3779B97F4A7C15`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SketchRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn seeded_rng(seed: u64) -> SketchRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of sub-stream `stream` of `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derive_seed_is_stable() {
        // Pinned so that files written by one build decode identically in another.
        assert_eq!(derive_seed(0, 0), 0xE220_A839_7B1D_CDAF);
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<u64> = seeded_rng(42).sample_iter(rand::distributions::Standard).take(8).collect();
        let b: Vec<u64> = seeded_rng(42).sample_iter(rand::distributions::Standard).take(8).collect();
        assert_eq!(a, b);
    }
}
