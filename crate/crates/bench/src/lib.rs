//! Synthetic inputs shared by the benchmarks.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n × m` features drawn uniformly from `[-1, 1)` and balanced 0/1 labels.
pub fn synthetic(n: usize, m: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, m), |_| rng.random_range(-1.0..1.0));
    let y = Array1::from_shape_fn(n, |i| (i % 2) as f64);
    (x, y)
}
