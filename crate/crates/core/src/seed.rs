//! Counter-based seed derivation.
//!
//! Every random draw in the crate is a pure function of a master seed and a
//! small tuple of integer coordinates, so results never depend on the order
//! in which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `(master, stream, index)` into a 64-bit seed.
#[inline]
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(b ^ index.wrapping_mul(0xA076_1D64_78BD_642F))
}

#[inline]
pub fn rng_for(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}

/// Identifies one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamSeed {
    pub master: u64,
    pub stream_id: u64,
}

impl StreamSeed {
    pub fn new(master: u64, stream_id: u64) -> Self {
        Self { master, stream_id }
    }

    /// Generator dedicated to position `index` of this stream.
    pub fn rng_at(&self, index: u64) -> ChaCha8Rng {
        rng_for(self.master, self.stream_id, index)
    }

    /// A child seed family, e.g. one per Monte Carlo run.
    pub fn child(&self, index: u64) -> u64 {
        derive_seed(self.master, self.stream_id, index)
    }
}

// Well-known stream identifiers for seed families used across modules.
pub const STREAM_REFERENCE: u64 = 0x5245_4600;
pub const STREAM_DEPLOY: u64 = 0x4445_5000;
pub const STREAM_RUNS: u64 = 0x5255_4e00;
pub const STREAM_PERMUTATION: u64 = 0x5045_5200;
pub const STREAM_BOOTSTRAP: u64 = 0x424f_4f00;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_a_pure_function() {
        assert_eq!(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 2, 4));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 3, 3));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(2, 2, 3));
        let mut a = rng_for(7, 0, 9);
        let mut b = rng_for(7, 0, 9);
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn swapped_coordinates_do_not_collide() {
        assert_ne!(derive_seed(0, 1, 2), derive_seed(0, 2, 1));
    }
}
