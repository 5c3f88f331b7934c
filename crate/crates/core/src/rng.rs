//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed, with the
//! stream id selecting an independent keystream. The algorithm is fixed and
//! portable, so a `(seed, stream)` pair reproduces the same numbers on every
//! platform and independently of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard normal vector.
pub fn normal_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Uniform vector in `[lo, hi)`.
pub fn uniform_vec(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    use rand::Rng as _;
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}
