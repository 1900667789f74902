//! Deterministic RNG stream derivation.
//!
//! Every consumer gets its own ChaCha20 stream derived from the master seed,
//! a stream tag and an index. Episode k is generated by the same stream
//! whether it is rolled out in parallel or sequentially, which is what makes
//! parallel collection bit-identical to the single-thread path.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Stream tags. Distinct tags keep consumers from sharing draws.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const ROLLOUT: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const SAMPLER: u64 = 4;
}

pub fn derive_rng(master_seed: u64, stream: u64, index: u64) -> ChaCha20Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&stream.to_le_bytes());
    seed[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha20Rng::from_seed(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: f64 = derive_rng(7, stream::ROLLOUT, 3).random();
        let b: f64 = derive_rng(7, stream::ROLLOUT, 3).random();
        let c: f64 = derive_rng(7, stream::ROLLOUT, 4).random();
        let d: f64 = derive_rng(7, stream::EVAL, 3).random();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a.to_bits(), c.to_bits());
        assert_ne!(a.to_bits(), d.to_bits());
    }
}
