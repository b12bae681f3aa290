//! Binary linear SVM trained in the primal by stochastic subgradient descent.
//!
//! Minimizes `0.5 * |w|^2 + C * sum_i max(0, 1 - y_i (w . x_i + b))` with the
//! Pegasos step size `1 / (lambda * t)`, `lambda = 1 / (C * n)`, visiting the
//! samples in a seeded permutation that is redrawn every epoch. The bias is
//! not regularized.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub regularization_c: f64,
    pub max_epochs: usize,
    /// Relative objective change below which training stops.
    pub tolerance: f64,
    pub seed: u64,
    /// Shift and scale every feature to zero mean and unit variance on the
    /// training set before fitting.
    pub standardize: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            regularization_c: 1.0,
            max_epochs: 200,
            tolerance: 1e-6,
            seed: 0,
            standardize: true,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.regularization_c > 0.0 && self.regularization_c.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "C must be positive, got {}",
                self.regularization_c
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Affine map applied to raw features before the linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// `1 / std`, or `0` for constant features so they map to zero.
    pub inv_std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows() as f64;
        let d = x.cols();
        let mut mean = vec![0.0; d];
        for row in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let c = v - m;
                *s += c * c;
            }
        }
        let inv_std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    0.0
                }
            })
            .collect();
        Self { mean, inv_std }
    }

    pub fn transform_row(&self, row: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(row).zip(&self.mean).zip(&self.inv_std) {
            *o = (v - m) * s;
        }
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            self.transform_row(x.row(i), out.row_mut(i));
        }
        out
    }
}

/// A trained binary linear classifier. `weights` live in the standardized
/// feature space when a [`Standardizer`] is attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub train_objective: f64,
    pub standardizer: Option<Standardizer>,
}

impl LinearModel {
    /// A model acting directly on raw features.
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Self {
            weights,
            bias,
            train_objective: f64::NAN,
            standardizer: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn decision(&self, row: &[f64]) -> f64 {
        match &self.standardizer {
            None => dot(&self.weights, row) + self.bias,
            Some(s) => {
                let mut acc = self.bias;
                for (((w, v), m), is) in self.weights.iter().zip(row).zip(&s.mean).zip(&s.inv_std) {
                    acc += w * (v - m) * is;
                }
                acc
            }
        }
    }
}

/// Trains a model; see [`train_traced`] for the per-epoch objective.
pub fn train(x: &Matrix, y: &[i8], config: &SvmConfig) -> Result<LinearModel> {
    train_traced(x, y, config).map(|(model, _)| model)
}

/// Trains a model and also returns the objective of the retained iterate at
/// the end of every epoch.
///
/// At the end of every epoch the bias is reset to its exact minimizer for the
/// current weights. Subgradient steps do not decrease the objective
/// monotonically, so the retained iterate is the best epoch-end iterate seen
/// so far and its objective sequence is non-increasing. Training stops once
/// the current iterate's objective changes by less than `tolerance` relative
/// to the previous epoch.
pub fn train_traced(x: &Matrix, y: &[i8], config: &SvmConfig) -> Result<(LinearModel, Vec<f64>)> {
    config.validate()?;
    let n = x.rows();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if y.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: y.len(),
        });
    }
    if x.cols() == 0 {
        return Err(Error::InvalidConfig("no active features to train on".into()));
    }
    if let Some((row, column)) = x.find_non_finite() {
        return Err(Error::NonFinite { row, column });
    }
    if let Some(bad) = y.iter().find(|&&l| l != 1 && l != -1) {
        return Err(Error::InvalidConfig(format!("labels must be +1/-1, got {bad}")));
    }

    let d = x.cols();
    let standardizer = config.standardize.then(|| Standardizer::fit(x));

    if y.iter().all(|&l| l == y[0]) {
        let model = LinearModel {
            weights: vec![0.0; d],
            bias: f64::from(y[0]),
            train_objective: 0.0,
            standardizer,
        };
        return Ok((model, vec![0.0]));
    }

    let z = match &standardizer {
        Some(s) => s.transform(x),
        None => x.clone(),
    };
    // All-zero columns never receive a gradient, so their weights stay at
    // zero; training on the rest gives the same model, faster.
    let live: Vec<usize> = (0..d)
        .filter(|&j| z.iter_rows().any(|row| row[j] != 0.0))
        .collect();
    let z = if live.len() < d { z.select_columns(&live) } else { z };
    let d_live = live.len();
    let yf: Vec<f64> = y.iter().map(|&l| f64::from(l)).collect();

    let c = config.regularization_c;
    let lambda = 1.0 / (c * n as f64);
    let radius_sq = 1.0 / lambda;

    // w = scale * v, so the per-step shrink is O(1).
    let mut v = vec![0.0; d_live];
    let mut scale = 1.0;
    let mut v_norm_sq = 0.0;
    let mut bias = 0.0;
    let mut t: u64 = 0;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();

    let mut best_w = vec![0.0; d_live];
    let mut best_b = 0.0;
    let mut best_obj = f64::INFINITY;
    let mut last_obj = f64::INFINITY;
    let mut trace = Vec::with_capacity(config.max_epochs);

    for _ in 0..config.max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let zi = z.row(i);
            let margin = yf[i] * (scale * dot(&v, zi) + bias);

            let shrink = 1.0 - 1.0 / t as f64;
            if shrink == 0.0 {
                v.iter_mut().for_each(|e| *e = 0.0);
                v_norm_sq = 0.0;
                scale = 1.0;
            } else {
                scale *= shrink;
            }

            if margin < 1.0 {
                let step = eta * yf[i] / scale;
                let mut cross = 0.0;
                let mut zz = 0.0;
                for (vj, zj) in v.iter_mut().zip(zi) {
                    cross += *vj * zj;
                    zz += zj * zj;
                    *vj += step * zj;
                }
                v_norm_sq += 2.0 * step * cross + step * step * zz;
                bias += eta * yf[i];
            }

            let w_norm_sq = scale * scale * v_norm_sq;
            if w_norm_sq > radius_sq {
                scale *= (radius_sq / w_norm_sq).sqrt();
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|e| *e *= scale);
                v_norm_sq *= scale * scale;
                scale = 1.0;
            }
        }

        let w: Vec<f64> = v.iter().map(|e| e * scale).collect();
        let scores: Vec<f64> = z.iter_rows().map(|row| dot(&w, row)).collect();
        bias = best_bias(&scores, &yf, bias);
        let obj = objective(&scores, &yf, &w, bias, c);
        if obj < best_obj {
            best_obj = obj;
            best_w = w;
            best_b = bias;
        }
        trace.push(best_obj);
        let settled = last_obj.is_finite() && (last_obj - obj).abs() <= config.tolerance * last_obj.abs();
        last_obj = obj;
        if settled {
            break;
        }
    }

    let mut weights = vec![0.0; d];
    for (&j, wj) in live.iter().zip(best_w) {
        weights[j] = wj;
    }
    let model = LinearModel {
        weights,
        bias: best_b,
        train_objective: best_obj,
        standardizer,
    };
    Ok((model, trace))
}

/// The bias minimizing the hinge sum for fixed scores `w . x_i`, nearest
/// `current`.
///
/// The sum is convex and piecewise linear in `b`; its slope starts at minus
/// the number of positives `p` and rises by one at each kink `y_i - w . x_i`.
/// It is therefore flat, and minimal, between the `p`-th and `(p+1)`-th
/// smallest kinks.
fn best_bias(scores: &[f64], y: &[f64], current: f64) -> f64 {
    let mut kinks: Vec<f64> = scores.iter().zip(y).map(|(f, yi)| yi - f).collect();
    kinks.sort_by(f64::total_cmp);
    let p = y.iter().filter(|&&yi| yi > 0.0).count();
    current.clamp(kinks[p - 1], kinks[p])
}

fn objective(scores: &[f64], y: &[f64], w: &[f64], b: f64, c: f64) -> f64 {
    let hinge: f64 = scores
        .iter()
        .zip(y)
        .map(|(f, yi)| (1.0 - yi * (f + b)).max(0.0))
        .sum();
    0.5 * dot(w, w) + c * hinge
}

/// `sign(w . x + b)` per row, with `sign(0) = +1`.
pub fn predict(model: &LinearModel, x: &Matrix) -> Result<Vec<i8>> {
    if x.cols() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            found: x.cols(),
        });
    }
    Ok(x
        .iter_rows()
        .map(|row| if model.decision(row) >= 0.0 { 1 } else { -1 })
        .collect())
}

/// Fraction of rows whose prediction matches `y`.
pub fn accuracy(model: &LinearModel, x: &Matrix, y: &[i8]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::UndefinedAccuracy);
    }
    if y.len() != x.rows() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    let predicted = predict(model, x)?;
    let hits = predicted.iter().zip(y).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / y.len() as f64)
}

/// Indices of the `s` largest `|w_j|`, largest first; equal magnitudes keep
/// ascending index order.
pub fn top_weight_indices(model: &LinearModel, s: usize) -> Result<Vec<usize>> {
    let d = model.dim();
    if s > d {
        return Err(Error::Bounds {
            requested: s,
            available: d,
        });
    }
    let w = &model.weights;
    let mut idx: Vec<usize> = (0..d).collect();
    let by_magnitude = |a: &usize, b: &usize| w[*b].abs().total_cmp(&w[*a].abs()).then(a.cmp(b));
    if s < d && s > 0 {
        idx.select_nth_unstable_by(s - 1, by_magnitude);
    }
    idx.truncate(s);
    idx.sort_by(by_magnitude);
    Ok(idx)
}
