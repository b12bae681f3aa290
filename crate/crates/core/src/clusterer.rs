//! Agglomerative clustering driven by unmasking scores.
//!
//! The pipeline over-segments the data into `K` initial clusters, folds
//! clusters too small to split into their nearest neighbour, then merges
//! the pairs with the highest unmasking score until `k` clusters remain.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{augment, AugmentationSpec, Dataset, ImageShape};
use crate::error::{Error, Result};
use crate::matrix::{nearest_row, squared_distance, Matrix};
use crate::seed::{derive, pair_seed};
use crate::unmasking::{unmask_pair, UnmaskingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// `initial_k` random samples become centroids; every sample joins the
    /// nearest one.
    RandomCentroids { initial_k: usize },
    /// One cluster per sample (`K = m`), padded out with artificial variants.
    Augment {
        shape: ImageShape,
        spec: AugmentationSpec,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    /// Each round sweeps all pairs by descending score and merges every pair
    /// of mutual best partners.
    #[default]
    Sweep,
    /// Each round merges only the single best pair.
    BestPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub target_k: usize,
    pub init: InitStrategy,
    pub unmasking: UnmaskingConfig,
    pub merge_mode: MergeMode,
    pub seed: u64,
}

impl ClusteringConfig {
    pub fn random_centroids(target_k: usize, initial_k: usize) -> Self {
        Self {
            target_k,
            init: InitStrategy::RandomCentroids { initial_k },
            unmasking: UnmaskingConfig::default(),
            merge_mode: MergeMode::Sweep,
            seed: 0,
        }
    }

    pub fn augment(target_k: usize, shape: ImageShape, spec: AugmentationSpec) -> Self {
        Self {
            init: InitStrategy::Augment { shape, spec },
            ..Self::random_centroids(target_k, 0)
        }
    }

    /// Checks everything that can be checked before touching the data:
    /// `1 <= k <= K`, and the augmentation parameters.
    pub fn validate(&self) -> Result<()> {
        if self.target_k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        match &self.init {
            InitStrategy::RandomCentroids { initial_k } if *initial_k < self.target_k => {
                Err(Error::InvalidConfig(format!(
                    "K must be >= k (K = {initial_k}, k = {})",
                    self.target_k
                )))
            }
            InitStrategy::RandomCentroids { .. } => Ok(()),
            InitStrategy::Augment { spec, .. } => spec.validate(),
        }
    }

    /// Full validation against a dataset of `m` samples with `d` features.
    pub fn validate_for(&self, m: usize, d: usize) -> Result<()> {
        self.validate()?;
        match &self.init {
            InitStrategy::RandomCentroids { initial_k } if *initial_k > m => {
                return Err(Error::InvalidConfig(format!(
                    "K must be <= m (K = {initial_k}, m = {m})"
                )))
            }
            InitStrategy::Augment { shape, .. } => shape.check(d)?,
            _ => {}
        }
        if self.target_k > m {
            return Err(Error::InvalidConfig(format!(
                "k must be <= m (k = {}, m = {m})",
                self.target_k
            )));
        }
        self.unmasking.validate(d).map(drop)
    }
}

/// Cluster ids are the indices of the initial clusters; a merged cluster
/// keeps the lower id.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    assignment: Vec<usize>,
    members: BTreeMap<usize, Vec<usize>>,
    score_cache: BTreeMap<(usize, usize), f64>,
    /// For augmented data: the row index of every original sample.
    originals: Option<Vec<usize>>,
}

impl ClusterState {
    /// Builds a state from a per-row cluster id.
    pub fn from_assignment(assignment: Vec<usize>) -> Self {
        let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (row, &c) in assignment.iter().enumerate() {
            members.entry(c).or_default().push(row);
        }
        Self {
            assignment,
            members,
            score_cache: BTreeMap::new(),
            originals: None,
        }
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn active_clusters(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.keys().copied()
    }

    pub fn active_count(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self, id: usize) -> Option<&[usize]> {
        self.members.get(&id).map(Vec::as_slice)
    }

    pub fn cluster_size(&self, id: usize) -> usize {
        self.members.get(&id).map_or(0, Vec::len)
    }

    pub fn cached_score(&self, a: usize, b: usize) -> Option<f64> {
        self.score_cache.get(&key(a, b)).copied()
    }

    pub fn cached_pairs(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.score_cache.iter().map(|(&k, &v)| (k, v))
    }

    pub fn originals(&self) -> Option<&[usize]> {
        self.originals.as_deref()
    }

    /// Merges `b` into `a` (or vice versa); the survivor is the lower id.
    /// Drops every cached score that involves either cluster.
    pub fn merge(&mut self, a: usize, b: usize) -> Result<usize> {
        if a == b || !self.members.contains_key(&a) || !self.members.contains_key(&b) {
            return Err(Error::InvalidState(format!(
                "cannot merge clusters {a} and {b}"
            )));
        }
        let (keep, gone) = key(a, b);
        let moved = self.members.remove(&gone).expect("checked above");
        for &row in &moved {
            self.assignment[row] = keep;
        }
        let target = self.members.get_mut(&keep).expect("checked above");
        target.extend(moved);
        target.sort_unstable();
        self.score_cache
            .retain(|&(x, y), _| x != keep && y != keep && x != gone && y != gone);
        Ok(keep)
    }

    /// Checks that members, assignment and cache agree.
    pub fn check_invariants(&self) -> Result<()> {
        let mut count = 0;
        for (&id, rows) in &self.members {
            if rows.is_empty() {
                return Err(Error::InvalidState(format!("cluster {id} is empty")));
            }
            for &r in rows {
                if self.assignment[r] != id {
                    return Err(Error::InvalidState(format!(
                        "row {r} listed in {id} but assigned to {}",
                        self.assignment[r]
                    )));
                }
            }
            count += rows.len();
        }
        if count != self.assignment.len() {
            return Err(Error::InvalidState("clusters do not partition the rows".into()));
        }
        for &(a, b) in self.score_cache.keys() {
            if !self.members.contains_key(&a) || !self.members.contains_key(&b) {
                return Err(Error::InvalidState(format!(
                    "cached score for inactive pair ({a}, {b})"
                )));
            }
        }
        Ok(())
    }

    fn centroid(&self, features: &Matrix, id: usize) -> Vec<f64> {
        let rows = &self.members[&id];
        let mut c = vec![0.0; features.cols()];
        for &r in rows {
            for (s, v) in c.iter_mut().zip(features.row(r)) {
                *s += v;
            }
        }
        c.iter_mut().for_each(|s| *s /= rows.len() as f64);
        c
    }
}

fn key(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub a: usize,
    pub b: usize,
    pub score: f64,
}

/// A small cluster folded into its nearest neighbour before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreMerge {
    pub a: usize,
    pub b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ResultRepr", try_from = "ResultRepr")]
pub struct ClusterResult {
    pub k: usize,
    /// Labels in `0..k` for every original sample.
    pub assignment: Vec<usize>,
    /// `k x d`; row `r` is the mean of the original samples labelled `r`.
    pub centroids: Matrix,
    pub merge_log: Vec<MergeRecord>,
    pub premerge_log: Vec<PreMerge>,
}

#[derive(Serialize, Deserialize)]
struct ResultRepr {
    k: usize,
    assignment: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    #[serde(default)]
    merge_log: Vec<MergeRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    premerge_log: Vec<PreMerge>,
}

impl From<ClusterResult> for ResultRepr {
    fn from(r: ClusterResult) -> Self {
        Self {
            k: r.k,
            assignment: r.assignment,
            centroids: r.centroids.to_rows(),
            merge_log: r.merge_log,
            premerge_log: r.premerge_log,
        }
    }
}

impl TryFrom<ResultRepr> for ClusterResult {
    type Error = Error;

    fn try_from(r: ResultRepr) -> Result<Self> {
        let centroids = Matrix::from_rows(&r.centroids)?;
        if centroids.rows() != r.k {
            return Err(Error::Format(format!(
                "k = {} but {} centroids",
                r.k,
                centroids.rows()
            )));
        }
        Ok(Self {
            k: r.k,
            assignment: r.assignment,
            centroids,
            merge_log: r.merge_log,
            premerge_log: r.premerge_log,
        })
    }
}

/// Picks `initial_k` distinct samples as centroids and assigns every sample
/// to the nearest one (ties to the lowest centroid index). Clusters left
/// empty by duplicate centroids are dropped.
pub fn init_random_centroids(features: &Matrix, initial_k: usize, seed: u64) -> Result<ClusterState> {
    let m = features.rows();
    if initial_k == 0 || initial_k > m {
        return Err(Error::InvalidConfig(format!(
            "K must be in 1..={m}, got {initial_k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, m, initial_k).into_vec();
    let centroids = features.select_rows(&picks);
    let assignment = features
        .iter_rows()
        .map(|row| nearest_row(&centroids, row).0)
        .collect();
    Ok(ClusterState::from_assignment(assignment))
}

/// One initial cluster per sample, holding the sample and its artificial
/// variants. Returns the state over the augmented rows and the augmented data.
pub fn init_augment(
    dataset: &Dataset,
    shape: ImageShape,
    spec: &AugmentationSpec,
) -> Result<(ClusterState, Dataset)> {
    let (augmented, origin) = augment(dataset, shape, spec)?;
    let per = 1 + spec.copies_per_sample;
    let mut state = ClusterState::from_assignment(origin);
    state.originals = Some((0..dataset.sample_count()).map(|i| i * per).collect());
    Ok((state, augmented))
}

/// Folds every cluster smaller than `min_size` into the cluster with the
/// nearest centroid, smallest clusters first (ties to the lower id). Stops
/// early if only `target_k` clusters remain.
pub fn premerge_small_clusters(
    features: &Matrix,
    state: &mut ClusterState,
    min_size: usize,
    target_k: usize,
) -> Result<Vec<PreMerge>> {
    let mut log = Vec::new();
    let mut centroids: BTreeMap<usize, Vec<f64>> = state
        .active_clusters()
        .map(|id| (id, state.centroid(features, id)))
        .collect();
    while state.active_count() > target_k.max(1) {
        let Some(small) = state
            .members
            .iter()
            .filter(|(_, rows)| rows.len() < min_size)
            .min_by_key(|(&id, rows)| (rows.len(), id))
            .map(|(&id, _)| id)
        else {
            break;
        };
        let here = &centroids[&small];
        let mut nearest = None;
        for (&id, c) in &centroids {
            if id == small {
                continue;
            }
            let d = squared_distance(here, c);
            if nearest.map_or(true, |(_, best)| d < best) {
                nearest = Some((id, d));
            }
        }
        let (other, _) = nearest.expect("more than one active cluster");
        let kept = state.merge(small, other)?;
        let gone = if kept == small { other } else { small };
        centroids.remove(&gone);
        centroids.insert(kept, state.centroid(features, kept));
        log.push(PreMerge { a: small, b: other });
    }
    Ok(log)
}

/// Scores the pair `{a, b}` from scratch.
pub fn score_pair(
    features: &Matrix,
    state: &ClusterState,
    a: usize,
    b: usize,
    config: &UnmaskingConfig,
) -> Result<f64> {
    let rows = |id| {
        state
            .members(id)
            .ok_or_else(|| Error::InvalidState(format!("cluster {id} is not active")))
    };
    let (lo, hi) = key(a, b);
    let curve = unmask_pair(
        &features.select_rows(rows(lo)?),
        &features.select_rows(rows(hi)?),
        config,
        pair_seed(lo, hi, config.seed),
    )?;
    Ok(curve.score)
}

/// Fills the cache with scores for every active pair that lacks one.
/// Pairs are scored in parallel on the current rayon pool.
pub fn fill_score_cache(features: &Matrix, state: &mut ClusterState, config: &UnmaskingConfig) -> Result<usize> {
    let ids: Vec<usize> = state.active_clusters().collect();
    let missing: Vec<(usize, usize)> = ids
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| ids[i + 1..].iter().map(move |&b| (a, b)))
        .filter(|p| !state.score_cache.contains_key(p))
        .collect();
    let snapshot = &*state;
    let scored = missing
        .par_iter()
        .map(|&(a, b)| score_pair(features, snapshot, a, b, config).map(|s| ((a, b), s)))
        .collect::<Result<Vec<_>>>()?;
    let n = scored.len();
    state.score_cache.extend(scored);
    Ok(n)
}

/// Merges clusters until `target_k` remain and produces the final labels and
/// centroids.
///
/// `features` are the rows the state was built over (the augmented rows for
/// augmentation-initialized states). Every active cluster must already meet
/// the unmasking minimum size.
pub fn merge_to_k(features: &Matrix, mut state: ClusterState, config: &ClusteringConfig) -> Result<ClusterResult> {
    let target_k = config.target_k;
    if state.active_count() < target_k {
        return Err(Error::InvalidState(format!(
            "{} active clusters, fewer than k = {target_k}",
            state.active_count()
        )));
    }
    if state.assignment.len() != features.rows() {
        return Err(Error::LengthMismatch {
            left: state.assignment.len(),
            right: features.rows(),
        });
    }

    let mut merge_log = Vec::new();
    while state.active_count() > target_k {
        fill_score_cache(features, &mut state, &config.unmasking)?;
        let mut ranked: Vec<((usize, usize), f64)> = state.cached_pairs().collect();
        ranked.sort_by(|(pa, sa), (pb, sb)| sb.total_cmp(sa).then(pa.cmp(pb)));

        // Each cluster's best partner is its first appearance in rank order.
        let mut best = BTreeMap::new();
        for &((a, b), _) in &ranked {
            best.entry(a).or_insert(b);
            best.entry(b).or_insert(a);
        }

        let mut touched = BTreeSet::new();
        for ((a, b), score) in ranked {
            if touched.contains(&a) || touched.contains(&b) {
                continue;
            }
            // Only mutual best partners merge; anything else waits for the
            // next round rather than pairing with whatever is left.
            if best[&a] != b || best[&b] != a {
                continue;
            }
            touched.insert(a);
            touched.insert(b);
            state.merge(a, b)?;
            merge_log.push(MergeRecord { a, b, score });
            if state.active_count() == target_k || config.merge_mode == MergeMode::BestPair {
                break;
            }
        }
    }

    finish(features, &state, merge_log, Vec::new())
}

fn finish(
    features: &Matrix,
    state: &ClusterState,
    merge_log: Vec<MergeRecord>,
    premerge_log: Vec<PreMerge>,
) -> Result<ClusterResult> {
    let relabel: BTreeMap<usize, usize> = state
        .active_clusters()
        .enumerate()
        .map(|(label, id)| (id, label))
        .collect();
    let (rows, assignment): (Vec<usize>, Vec<usize>) = match &state.originals {
        Some(orig) => orig.iter().map(|&r| (r, relabel[&state.assignment[r]])).unzip(),
        None => state
            .assignment
            .iter()
            .enumerate()
            .map(|(r, id)| (r, relabel[id]))
            .unzip(),
    };
    let k = relabel.len();
    let centroids = compute_centroids(&features.select_rows(&rows), &assignment, k)?;
    Ok(ClusterResult {
        k,
        assignment,
        centroids,
        merge_log,
        premerge_log,
    })
}

/// Runs the whole pipeline: initialization, small-cluster folding and
/// unmasking-driven merging.
pub fn cluster(features: &Matrix, config: &ClusteringConfig) -> Result<ClusterResult> {
    let (state, rows) = initialize(features, config)?;
    cluster_from(&rows, state, config)
}

/// The initial state and the rows it refers to (augmented rows for
/// augmentation init, otherwise `features` itself).
pub fn initialize(features: &Matrix, config: &ClusteringConfig) -> Result<(ClusterState, Matrix)> {
    config.validate_for(features.rows(), features.cols())?;
    match &config.init {
        InitStrategy::RandomCentroids { initial_k } => {
            let state = init_random_centroids(features, *initial_k, derive(config.seed, 0x1a17))?;
            Ok((state, features.clone()))
        }
        InitStrategy::Augment { shape, spec } => {
            let dataset = Dataset::new(features.clone(), None)?;
            let (state, augmented) = init_augment(&dataset, *shape, spec)?;
            Ok((state, augmented.into_parts().0))
        }
    }
}

/// Continues the pipeline from an initial state over `rows`.
pub fn cluster_from(rows: &Matrix, mut state: ClusterState, config: &ClusteringConfig) -> Result<ClusterResult> {
    let premerge_log = premerge_small_clusters(
        rows,
        &mut state,
        config.unmasking.min_samples_per_cluster,
        config.target_k,
    )?;
    if state.active_count() < config.target_k {
        return Err(Error::InvalidState(format!(
            "initialization produced {} clusters, fewer than k = {}",
            state.active_count(),
            config.target_k
        )));
    }
    let mut result = merge_to_k(rows, state, config)?;
    result.premerge_log = premerge_log;
    Ok(result)
}

/// Re-applies logged merges to an initial per-row cluster id and returns
/// labels re-indexed to `0..k` by ascending surviving id.
pub fn replay_merges(
    initial: &[usize],
    premerges: &[PreMerge],
    merges: &[MergeRecord],
) -> Vec<usize> {
    let mut ids = initial.to_vec();
    let pairs = premerges.iter().map(|p| (p.a, p.b)).chain(merges.iter().map(|m| (m.a, m.b)));
    for (a, b) in pairs {
        let (keep, gone) = key(a, b);
        ids.iter_mut().filter(|c| **c == gone).for_each(|c| *c = keep);
    }
    let survivors: BTreeSet<usize> = ids.iter().copied().collect();
    let relabel: BTreeMap<usize, usize> = survivors.into_iter().enumerate().map(|(l, id)| (id, l)).collect();
    ids.iter().map(|id| relabel[id]).collect()
}

/// Mean of the rows carrying each label in `0..k`.
pub fn compute_centroids(features: &Matrix, assignment: &[usize], k: usize) -> Result<Matrix> {
    if assignment.len() != features.rows() {
        return Err(Error::LengthMismatch {
            left: features.rows(),
            right: assignment.len(),
        });
    }
    let mut sums = Matrix::zeros(k, features.cols());
    let mut counts = vec![0usize; k];
    for (row, &label) in features.iter_rows().zip(assignment) {
        if label >= k {
            return Err(Error::InvalidState(format!("label {label} outside 0..{k}")));
        }
        counts[label] += 1;
        for (s, v) in sums.row_mut(label).iter_mut().zip(row) {
            *s += v;
        }
    }
    for (r, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(Error::InvalidState(format!("cluster {r} is empty")));
        }
        sums.row_mut(r).iter_mut().for_each(|s| *s /= n as f64);
    }
    Ok(sums)
}

/// Label of the nearest centroid for every row (ties to the lowest label).
pub fn assign_nearest(centroids: &Matrix, x: &Matrix) -> Result<Vec<usize>> {
    if centroids.is_empty() {
        return Err(Error::InvalidState("no centroids".into()));
    }
    if x.cols() != centroids.cols() {
        return Err(Error::Dimension {
            expected: centroids.cols(),
            found: x.cols(),
        });
    }
    Ok(x.iter_rows().map(|row| nearest_row(centroids, row).0).collect())
}
