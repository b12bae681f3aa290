use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::hungarian::solve_min_cost;
use crate::error::{Error, Result};

/// Co-occurrence counts of predicted (rows) and true (columns) labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    /// Distinct predicted labels, ascending; row `r` counts `pred_labels[r]`.
    pub pred_labels: Vec<usize>,
    pub true_labels: Vec<usize>,
    pub counts: Vec<Vec<usize>>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
    pub total: usize,
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::LengthMismatch {
                left: pred.len(),
                right: truth.len(),
            });
        }
        if pred.is_empty() {
            return Err(Error::EmptyInput);
        }
        let index = |labels: &[usize]| -> BTreeMap<usize, usize> {
            let mut map: BTreeMap<usize, usize> = labels.iter().map(|&l| (l, 0)).collect();
            map.values_mut().enumerate().for_each(|(i, v)| *v = i);
            map
        };
        let (pi, ti) = (index(pred), index(truth));
        let mut counts = vec![vec![0; ti.len()]; pi.len()];
        for (p, t) in pred.iter().zip(truth) {
            counts[pi[p]][ti[t]] += 1;
        }
        Ok(Self::from_counts_with_labels(
            pi.into_keys().collect(),
            ti.into_keys().collect(),
            counts,
        ))
    }

    /// Table over labels `0..rows` and `0..cols` from raw counts.
    pub fn from_counts(counts: Vec<Vec<usize>>) -> Self {
        let rows = counts.len();
        let cols = counts.first().map_or(0, Vec::len);
        Self::from_counts_with_labels((0..rows).collect(), (0..cols).collect(), counts)
    }

    fn from_counts_with_labels(pred_labels: Vec<usize>, true_labels: Vec<usize>, counts: Vec<Vec<usize>>) -> Self {
        let row_sums: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
        let mut col_sums = vec![0; true_labels.len()];
        for row in &counts {
            for (s, c) in col_sums.iter_mut().zip(row) {
                *s += c;
            }
        }
        let total = row_sums.iter().sum();
        Self {
            pred_labels,
            true_labels,
            counts,
            row_sums,
            col_sums,
            total,
        }
    }

    /// Row-to-column matching maximizing the matched count. Rows left
    /// without a real column map to `None`.
    pub fn best_matching(&self) -> Vec<Option<usize>> {
        let cost: Vec<Vec<i64>> = self
            .counts
            .iter()
            .map(|r| r.iter().map(|&c| -(c as i64)).collect())
            .collect();
        let cols = self.true_labels.len();
        solve_min_cost(&cost)
            .into_iter()
            .map(|j| (j < cols).then_some(j))
            .collect()
    }

    pub fn matched_count(&self) -> usize {
        self.best_matching()
            .iter()
            .enumerate()
            .filter_map(|(r, j)| j.map(|j| self.counts[r][j]))
            .sum()
    }

    pub fn mutual_information(&self) -> f64 {
        let n = self.total as f64;
        let mut mi = 0.0;
        for (r, row) in self.counts.iter().enumerate() {
            for (c, &nij) in row.iter().enumerate() {
                if nij == 0 {
                    continue;
                }
                let nij = nij as f64;
                let outer = self.row_sums[r] as f64 * self.col_sums[c] as f64;
                mi += nij / n * (n * nij / outer).ln();
            }
        }
        mi
    }
}

/// Shannon entropy (nats) of a label distribution given by counts.
pub fn entropy_of_counts(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| c as f64 / n * (n / c as f64).ln())
        .sum()
}

/// Unsupervised clustering accuracy: the fraction of samples whose predicted
/// cluster maps to their true class under the best one-to-one mapping.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    Ok(table.matched_count() as f64 / table.total as f64)
}

/// Best one-to-one mapping from predicted labels to true labels. Predicted
/// labels that cannot be matched (more clusters than classes) are absent.
pub fn best_mapping(pred: &[usize], truth: &[usize]) -> Result<BTreeMap<usize, usize>> {
    let table = ContingencyTable::new(pred, truth)?;
    Ok(table
        .best_matching()
        .into_iter()
        .enumerate()
        .filter_map(|(r, j)| j.map(|j| (table.pred_labels[r], table.true_labels[j])))
        .collect())
}

/// Per-sample correctness after the best mapping; input to [`super::mcnemar`].
pub fn correctness(pred: &[usize], truth: &[usize]) -> Result<Vec<bool>> {
    let mapping = best_mapping(pred, truth)?;
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| mapping.get(p) == Some(t))
        .collect())
}

/// How mutual information is normalized into NMI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmiNormalization {
    /// `max(H_pred, H_true)`.
    #[default]
    Max,
    /// `(H_pred + H_true) / 2`.
    Arithmetic,
    /// `sqrt(H_pred * H_true)`.
    Geometric,
    /// `min(H_pred, H_true)`.
    Min,
}

/// NMI with max-entropy normalization.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    nmi_with(pred, truth, NmiNormalization::Max)
}

/// NMI with a chosen normalization. Two trivial partitions score 1; exactly
/// one trivial partition scores 0.
pub fn nmi_with(pred: &[usize], truth: &[usize], norm: NmiNormalization) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let hp = entropy_of_counts(&table.row_sums);
    let ht = entropy_of_counts(&table.col_sums);
    match (hp == 0.0, ht == 0.0) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let denom = match norm {
        NmiNormalization::Max => hp.max(ht),
        NmiNormalization::Arithmetic => 0.5 * (hp + ht),
        NmiNormalization::Geometric => (hp * ht).sqrt(),
        NmiNormalization::Min => hp.min(ht),
    };
    Ok(table.mutual_information().max(0.0) / denom)
}

/// Expected accuracy of guessing uniformly among the true classes.
pub fn random_chance_acc(truth: &[usize]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut classes = truth.to_vec();
    classes.sort_unstable();
    classes.dedup();
    Ok(1.0 / classes.len() as f64)
}
