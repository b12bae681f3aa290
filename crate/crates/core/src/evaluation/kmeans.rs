//! Lloyd's k-means with uniform random initialization and restarts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{nearest_row, squared_distance, Matrix};
use crate::seed::derive;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tolerance: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl KMeansConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_iters: 300,
            tolerance: 1e-6,
            seed: 0,
            restarts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    pub iterations: usize,
}

/// Best-inertia result over `config.restarts` seeded runs (ties go to the
/// earliest restart). Restarts run on the current rayon pool.
pub fn kmeans(features: &Matrix, config: &KMeansConfig) -> Result<KMeansResult> {
    validate(features, config)?;
    let runs = (0..config.restarts.max(1))
        .into_par_iter()
        .map(|r| kmeans_single(features, config, derive(config.seed, r as u64)).map(|(res, _)| res))
        .collect::<Result<Vec<_>>>()?;
    Ok(runs
        .into_iter()
        .reduce(|best, run| if run.inertia < best.inertia { run } else { best })
        .expect("at least one restart"))
}

fn validate(features: &Matrix, config: &KMeansConfig) -> Result<()> {
    if config.k == 0 || config.k > features.rows() {
        return Err(Error::InvalidConfig(format!(
            "k must be in 1..={}, got {}",
            features.rows(),
            config.k
        )));
    }
    if config.max_iters == 0 {
        return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
    }
    Ok(())
}

/// One Lloyd run from a seeded initialization. Also returns the inertia
/// after every assignment step.
pub fn kmeans_single(features: &Matrix, config: &KMeansConfig, seed: u64) -> Result<(KMeansResult, Vec<f64>)> {
    validate(features, config)?;
    let (m, d, k) = (features.rows(), features.cols(), config.k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, m, k).into_vec();
    let mut centroids = features.select_rows(&picks);

    let mut labels = vec![0; m];
    let mut dist = vec![0.0; m];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        for (i, row) in features.iter_rows().enumerate() {
            let (c, d2) = nearest_row(&centroids, row);
            labels[i] = c;
            dist[i] = d2;
        }
        let inertia: f64 = dist.iter().sum();
        trace.push(inertia);
        if iterations == config.max_iters {
            break;
        }
        iterations += 1;

        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (row, &c) in features.iter_rows().zip(&labels) {
            counts[c] += 1;
            for (s, v) in sums.row_mut(c).iter_mut().zip(row) {
                *s += v;
            }
        }
        // Empty clusters take the points currently farthest from their centroid.
        let mut taken = vec![false; m];
        for c in 0..k {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                sums.row_mut(c).iter_mut().for_each(|s| *s /= n);
                continue;
            }
            let far = (0..m)
                .filter(|&i| !taken[i])
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                .expect("k <= m");
            taken[far] = true;
            sums.row_mut(c).copy_from_slice(features.row(far));
        }

        let shift = (0..k)
            .map(|c| squared_distance(sums.row(c), centroids.row(c)))
            .fold(0.0, f64::max)
            .sqrt();
        centroids = sums;
        if shift < config.tolerance {
            // One more assignment pass so labels match the final centroids.
            for (i, row) in features.iter_rows().enumerate() {
                let (c, d2) = nearest_row(&centroids, row);
                labels[i] = c;
                dist[i] = d2;
            }
            trace.push(dist.iter().sum());
            break;
        }
    }

    let inertia = *trace.last().expect("at least one pass");
    Ok((
        KMeansResult {
            labels,
            centroids,
            inertia,
            iterations,
        },
        trace,
    ))
}
