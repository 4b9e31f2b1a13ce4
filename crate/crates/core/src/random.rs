//! Seeded generators. Every random quantity in the crate flows from an
//! explicit seed through these helpers.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform on the open interval (0, 1).
pub fn open_unit(rng: &mut Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Uniform on `[lo, hi)`.
pub fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * ((rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64))
}

/// Uniform integer in `0..n` (Lemire's multiply-shift; negligible bias for small n).
pub fn below(rng: &mut Rng, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

pub fn coin(rng: &mut Rng) -> bool {
    rng.next_u64() >> 63 == 1
}

/// Standard Gumbel draw `-ln(-ln U)`.
pub fn gumbel(rng: &mut Rng) -> f64 {
    #[allow(unused_imports)]
    use num_traits::Float;
    -(-open_unit(rng).ln()).ln()
}
