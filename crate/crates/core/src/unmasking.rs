//! Pair scoring by unmasking.
//!
//! Two clusters are labelled +1 / -1 and split once into train and test
//! halves. A linear SVM is trained and tested `n` times; after each round the
//! `s` features with the largest absolute weights are dropped from both
//! halves. Pairs whose accuracy collapses quickly are likely the same class,
//! so the merge score is `1 - mean(accuracy)`.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::derive;
use crate::svm::{self, SvmConfig};

/// Number of features removed per unmasking iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FeatureStep {
    /// `floor(d / (n + 1))`.
    #[default]
    Auto,
    Fixed(usize),
}

impl std::str::FromStr for FeatureStep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        s.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .map(Self::Fixed)
            .ok_or_else(|| Error::InvalidConfig(format!("s must be a positive integer or auto, got {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmaskingConfig {
    pub iterations: usize,
    pub features_removed: FeatureStep,
    pub min_samples_per_cluster: usize,
    pub seed: u64,
    pub svm: SvmConfig,
}

impl Default for UnmaskingConfig {
    fn default() -> Self {
        Self {
            iterations: 8,
            features_removed: FeatureStep::Auto,
            min_samples_per_cluster: 4,
            seed: 0,
            svm: SvmConfig::default(),
        }
    }
}

impl UnmaskingConfig {
    pub fn validate(&self, d: usize) -> Result<usize> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("n must be >= 1".into()));
        }
        if self.min_samples_per_cluster < 2 {
            return Err(Error::InvalidConfig(
                "min_samples_per_cluster must be >= 2".into(),
            ));
        }
        self.svm.validate()?;
        resolve_s(d, self.iterations, self.features_removed)
    }
}

/// Resolves the per-iteration removal count. `Auto` gives
/// `floor(d / (n + 1))`, which always leaves features after the last
/// iteration; an explicit `s` needs `n * s <= d`, so that the last SVM still
/// has at least `s` features to train on.
pub fn resolve_s(d: usize, n: usize, step: FeatureStep) -> Result<usize> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be >= 1".into()));
    }
    if d < n + 1 {
        return Err(Error::InvalidConfig(format!(
            "dimensionality {d} too small for {n} unmasking iterations (need d >= n + 1)"
        )));
    }
    match step {
        FeatureStep::Auto => Ok(d / (n + 1)),
        FeatureStep::Fixed(0) => Err(Error::InvalidConfig("s must be >= 1".into())),
        FeatureStep::Fixed(s) if n * s > d => Err(Error::InvalidConfig(format!(
            "n * s = {} exceeds the dimensionality {d}",
            n * s
        ))),
        FeatureStep::Fixed(s) => Ok(s),
    }
}

/// Original feature indices still in play, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMask {
    active: Vec<usize>,
}

impl FeatureMask {
    pub fn full(d: usize) -> Self {
        Self {
            active: (0..d).collect(),
        }
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Drops the given mask-local positions and returns their original
    /// indices in the order given.
    pub fn remove_local(&mut self, local: &[usize]) -> Vec<usize> {
        let removed: Vec<usize> = local.iter().map(|&j| self.active[j]).collect();
        let mut drop = vec![false; self.active.len()];
        for &j in local {
            drop[j] = true;
        }
        let mut k = 0;
        self.active.retain(|_| {
            k += 1;
            !drop[k - 1]
        });
        removed
    }
}

/// Per-iteration test accuracies for one pair and the derived merge score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmaskingCurve {
    pub accuracies: Vec<f64>,
    pub score: f64,
    /// Original feature indices removed after each iteration.
    pub removed_features: Vec<Vec<usize>>,
}

/// Train and test halves of a cluster pair.
#[derive(Debug, Clone)]
pub struct PairSplit {
    pub train_x: Matrix,
    pub train_y: Vec<i8>,
    pub test_x: Matrix,
    pub test_y: Vec<i8>,
}

/// Shuffles each cluster with a seeded RNG and splits it `ceil / floor`, the
/// larger half going to training. Rows of `samples_i` are labelled +1.
pub fn split_pair(
    samples_i: &Matrix,
    samples_j: &Matrix,
    seed: u64,
    min_samples_per_cluster: usize,
) -> Result<PairSplit> {
    for cluster in [samples_i, samples_j] {
        if cluster.rows() < min_samples_per_cluster.max(2) {
            return Err(Error::ClusterTooSmall {
                size: cluster.rows(),
                min: min_samples_per_cluster.max(2),
            });
        }
    }
    if samples_i.cols() != samples_j.cols() {
        return Err(Error::Dimension {
            expected: samples_i.cols(),
            found: samples_j.cols(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut halves = |m: &Matrix| {
        let mut order: Vec<usize> = (0..m.rows()).collect();
        order.shuffle(&mut rng);
        let cut = m.rows().div_ceil(2);
        (m.select_rows(&order[..cut]), m.select_rows(&order[cut..]))
    };
    let (train_i, test_i) = halves(samples_i);
    let (train_j, test_j) = halves(samples_j);

    let labels = |pos: usize, neg: usize| {
        let mut y = vec![1i8; pos];
        y.resize(pos + neg, -1);
        y
    };
    Ok(PairSplit {
        train_y: labels(train_i.rows(), train_j.rows()),
        test_y: labels(test_i.rows(), test_j.rows()),
        train_x: train_i.vstack(&train_j)?,
        test_x: test_i.vstack(&test_j)?,
    })
}

/// Scores a cluster pair. Deterministic in `(samples, config, pair_seed)` and
/// symmetric in the two clusters: the pair is put into a canonical order by
/// content before splitting, so swapping the arguments changes nothing.
pub fn unmask_pair(
    samples_i: &Matrix,
    samples_j: &Matrix,
    config: &UnmaskingConfig,
    pair_seed: u64,
) -> Result<UnmaskingCurve> {
    if samples_i.cols() != samples_j.cols() {
        return Err(Error::Dimension {
            expected: samples_i.cols(),
            found: samples_j.cols(),
        });
    }
    let d = samples_i.cols();
    let s = config.validate(d)?;

    let (first, second) = match content_order(samples_i, samples_j) {
        Ordering::Greater => (samples_j, samples_i),
        _ => (samples_i, samples_j),
    };
    let split = split_pair(first, second, pair_seed, config.min_samples_per_cluster)?;

    let mut mask = FeatureMask::full(d);
    let mut train_x = split.train_x;
    let mut test_x = split.test_x;
    let mut accuracies = Vec::with_capacity(config.iterations);
    let mut removed_features = Vec::with_capacity(config.iterations);

    for t in 0..config.iterations {
        let svm_config = SvmConfig {
            seed: derive(pair_seed, t as u64 + 1),
            ..config.svm.clone()
        };
        let model = svm::train(&train_x, &split.train_y, &svm_config)?;
        accuracies.push(svm::accuracy(&model, &test_x, &split.test_y)?);

        let top = svm::top_weight_indices(&model, s)?;
        removed_features.push(mask.remove_local(&top));
        let keep = kept_positions(train_x.cols(), &top);
        train_x = train_x.select_columns(&keep);
        test_x = test_x.select_columns(&keep);
    }

    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    Ok(UnmaskingCurve {
        accuracies,
        score: 1.0 - mean,
        removed_features,
    })
}

fn kept_positions(len: usize, removed: &[usize]) -> Vec<usize> {
    let mut drop = vec![false; len];
    for &j in removed {
        drop[j] = true;
    }
    (0..len).filter(|&j| !drop[j]).collect()
}

/// Total order on matrices: row count first, then the values lexicographically.
fn content_order(a: &Matrix, b: &Matrix) -> Ordering {
    a.rows().cmp(&b.rows()).then_with(|| {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}
