//! Deterministic sampling in Euclidean balls.
//!
//! All stochastic estimates in this crate draw their samples through these
//! helpers with a caller-supplied seed, so identical seeds give identical
//! results bit for bit.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded RNG used everywhere sampling is needed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for sub-task `index` of a seeded run.
pub fn subseed(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Uniform sample from the closed ball of radius `radius` around `center`,
/// by rejection from the enclosing cube.
pub fn uniform_in_ball(rng: &mut ChaCha8Rng, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let n = center.len();
    if radius == 0.0 {
        return center.clone();
    }
    loop {
        let offset = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0));
        if offset.norm() <= 1.0 {
            return center + offset * radius;
        }
    }
}

/// Uniform sample from `[lo, hi]`.
pub fn uniform_in_interval(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}
