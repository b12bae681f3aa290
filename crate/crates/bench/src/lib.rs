//! Synthetic workloads shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use umclust::Matrix;

/// `n` rows of i.i.d. `N(shift, 1)` features in `d` dimensions.
pub fn gaussian(n: usize, d: usize, shift: f64, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(shift, 1.0).expect("unit variance");
    let data = (0..n * d).map(|_| normal.sample(&mut rng)).collect();
    Matrix::new(n, d, data).expect("sized buffer")
}

/// `clusters` Gaussian blobs of `per_cluster` rows, centres spaced `gap` apart
/// along every axis.
pub fn blobs(clusters: usize, per_cluster: usize, d: usize, gap: f64, seed: u64) -> Matrix {
    let parts: Vec<Matrix> = (0..clusters)
        .map(|c| gaussian(per_cluster, d, c as f64 * gap, seed.wrapping_add(c as u64)))
        .collect();
    parts
        .iter()
        .skip(1)
        .fold(parts[0].clone(), |acc, m| acc.vstack(m).expect("same width"))
}
