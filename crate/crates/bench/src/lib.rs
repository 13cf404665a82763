//! Shared inputs for the benchmarks in `benches/`.

use quadest_core::Sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` uniform points on `[lo, hi)` with standard-uniform responses shifted to mean 1/2.
pub fn uniform_sample(n: usize, lo: f64, hi: f64, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
    let y = (0..n).map(|_| rng.random::<f64>()).collect();
    Sample::new(x, y).expect("valid sample")
}
