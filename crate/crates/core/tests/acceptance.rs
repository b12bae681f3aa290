//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use umclust::clusterer::{self, fill_score_cache, premerge_small_clusters, replay_merges, score_pair};
use umclust::evaluation::{
    clustering_accuracy, kmeans, kmeans_single, mcnemar, nmi, KMeansConfig,
    CHI2_1DOF_CRITICAL_001,
};
use umclust::svm::{self, SvmConfig};
use umclust::{
    assign_nearest, cluster, dataset, AugmentationSpec, ClusteringConfig, FeatureStep, ImageShape,
    Matrix, UnmaskingConfig,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Rows drawn from N(mean(j), sigma^2) independently per coordinate.
fn gaussian(n: usize, d: usize, mean: impl Fn(usize) -> f64, sigma: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let noise = Normal::new(0.0, sigma).unwrap();
    let data = (0..n * d).map(|i| mean(i % d) + noise.sample(rng)).collect();
    Matrix::new(n, d, data).unwrap()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

// ---------------------------------------------------------------- 1

fn mnist_subsample() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let ds = dataset::load_idx(
        &dir.join("mnist5k-images-idx3-ubyte"),
        Some(&dir.join("mnist5k-labels-idx1-ubyte")),
    )
    .map_err(|e| e.to_string())?;
    let labels = ds.labels().unwrap().to_vec();

    let (mut km, mut full, mut stub) = (vec![], vec![], vec![]);
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut train, mut test) = (vec![], vec![]);
        for digit in 0..10 {
            let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == digit).collect();
            idx.shuffle(&mut rng);
            train.extend_from_slice(&idx[..100]);
            test.extend_from_slice(&idx[100..200]);
        }
        let x_train = ds.features().select_rows(&train);
        let x_test = ds.features().select_rows(&test);
        let y_test: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
        let test_acc = |centroids: &Matrix| {
            let pred = assign_nearest(centroids, &x_test).unwrap();
            clustering_accuracy(&pred, &y_test).unwrap()
        };

        let baseline = kmeans(&x_train, &KMeansConfig { seed, ..KMeansConfig::new(10) }).unwrap();
        km.push(test_acc(&baseline.centroids));

        for (iterations, out) in [(8, &mut full), (1, &mut stub)] {
            let mut config = ClusteringConfig::random_centroids(10, 200);
            config.seed = seed;
            config.unmasking.seed = seed;
            config.unmasking.iterations = iterations;
            let result = cluster(&x_train, &config).map_err(|e| e.to_string())?;
            out.push(test_acc(&result.centroids));
        }
    }
    let (km, full, stub) = (mean(&km), mean(&full), mean(&stub));
    ensure(
        full - km >= 0.05 && full - stub >= 0.03,
        format!(
            "test ACC over 3 seeds: unmasking n=8 {full:.3}, n=1 {stub:.3}, k-means {km:.3} \
             (need n=8 >= k-means + 0.05 and >= n=1 + 0.03)"
        ),
    )
}

// ---------------------------------------------------------------- 2, 3

fn unmasking_config(iterations: usize, step: FeatureStep, c: f64) -> UnmaskingConfig {
    let mut config = UnmaskingConfig {
        iterations,
        features_removed: step,
        ..UnmaskingConfig::default()
    };
    config.svm.regularization_c = c;
    config
}

fn discrimination() -> Outcome {
    let mut lines = vec![];
    let mut ok = true;
    for c in [0.1, 1.0, 10.0] {
        let same_cfg = unmasking_config(4, FeatureStep::Auto, c);
        let sep_cfg = unmasking_config(4, FeatureStep::Fixed(20), c);
        let (mut same, mut sep) = (vec![], vec![]);
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let blob = gaussian(200, 20, |_| 0.0, 1.0, &mut rng);
            let a = blob.select_rows(&(0..100).collect::<Vec<_>>());
            let b = blob.select_rows(&(100..200).collect::<Vec<_>>());
            same.push(unmask_score(&a, &b, &same_cfg, seed)?);
            let a = gaussian(100, 100, |_| 0.0, 1.0, &mut rng);
            let b = gaussian(100, 100, |_| 2.0, 1.0, &mut rng);
            sep.push(unmask_score(&a, &b, &sep_cfg, seed)?);
        }
        let (same, sep) = (mean(&same), mean(&sep));
        ok &= same - sep >= 0.3 && (0.40..=0.60).contains(&same) && sep <= 0.10;
        lines.push(format!("C={c}: same {same:.3} separated {sep:.3} gap {:.3}", same - sep));
    }
    ensure(ok, lines.join("; "))
}

fn unmask_score(a: &Matrix, b: &Matrix, config: &UnmaskingConfig, seed: u64) -> Result<f64, String> {
    umclust::unmask_pair(a, b, config, seed)
        .map(|curve| curve.score)
        .map_err(|e| e.to_string())
}

fn single_feature() -> Outcome {
    let mut lines = vec![];
    let mut ok = true;
    for c in [0.1, 1.0, 10.0] {
        let config = unmasking_config(4, FeatureStep::Fixed(1), c);
        let (mut first, mut rest) = (vec![], vec![]);
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = gaussian(100, 20, |_| 0.0, 0.1, &mut rng);
            let b = gaussian(100, 20, |j| if j == 0 { 10.0 } else { 0.0 }, 0.1, &mut rng);
            let curve = umclust::unmask_pair(&a, &b, &config, seed).map_err(|e| e.to_string())?;
            first.push(curve.accuracies[0]);
            rest.push(mean(&curve.accuracies[1..]));
        }
        let (first, rest) = (mean(&first), mean(&rest));
        ok &= first >= 0.95 && (0.35..=0.65).contains(&rest);
        lines.push(format!("C={c}: iteration 1 {first:.3}, iterations 2-4 {rest:.3}"));
    }
    ensure(ok, lines.join("; "))
}

// ---------------------------------------------------------------- 4

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = vec![];
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn brute_force_acc(pred: &[usize], truth: &[usize]) -> f64 {
    let kp = pred.iter().max().unwrap() + 1;
    let kt = truth.iter().max().unwrap() + 1;
    let best = permutations(kp.max(kt))
        .iter()
        .map(|perm| pred.iter().zip(truth).filter(|&(&p, &t)| perm[p] == t).count())
        .max()
        .unwrap();
    best as f64 / pred.len() as f64
}

fn hungarian_acc() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for instance in 0..500 {
        let n = rng.gen_range(1..=30);
        let kp = rng.gen_range(1..=6);
        let kt = rng.gen_range(1..=6);
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kp)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kt)).collect();
        let got = clustering_accuracy(&pred, &truth).map_err(|e| e.to_string())?;
        let want = brute_force_acc(&pred, &truth);
        if got != want {
            return Err(format!("instance {instance}: ACC {got} but brute force gives {want}"));
        }
    }
    Ok("500 instances match the brute-force maximum exactly".into())
}

// ---------------------------------------------------------------- 5

fn entropy(probabilities: impl Iterator<Item = f64>) -> f64 {
    -probabilities.filter(|&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// I(X;Y) = H(X) + H(Y) - H(X,Y), normalized by max(H(X), H(Y)).
fn nmi_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let kp = pred.iter().max().unwrap() + 1;
    let kt = truth.iter().max().unwrap() + 1;
    let mut joint = vec![vec![0.0; kt]; kp];
    for (&p, &t) in pred.iter().zip(truth) {
        joint[p][t] += 1.0 / n;
    }
    let hp = entropy(joint.iter().map(|row| row.iter().sum()));
    let ht = entropy((0..kt).map(|t| joint.iter().map(|row| row[t]).sum()));
    let hpt = entropy(joint.iter().flatten().copied());
    let denom = hp.max(ht);
    if denom == 0.0 {
        return if hp == ht { 1.0 } else { 0.0 };
    }
    (hp + ht - hpt) / denom
}

fn nmi_oracle_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let kp = rng.gen_range(1..=6);
        let kt = rng.gen_range(1..=6);
        let (mut pred, mut truth) = (vec![], vec![]);
        for p in 0..kp {
            for t in 0..kt {
                for _ in 0..rng.gen_range(0..=8) {
                    pred.push(p);
                    truth.push(t);
                }
            }
        }
        if pred.is_empty() {
            pred.push(0);
            truth.push(0);
        }
        let got = nmi(&pred, &truth).map_err(|e| e.to_string())?;
        worst = worst.max((got - nmi_oracle(&pred, &truth)).abs());
    }
    let x: Vec<usize> = (0..40).map(|i| i % 4).collect();
    let self_nmi = nmi(&x, &x).map_err(|e| e.to_string())?;
    let constant = nmi(&vec![0; 40], &x).map_err(|e| e.to_string())?;
    ensure(
        worst <= 1e-9 && self_nmi == 1.0 && constant == 0.0,
        format!("max |nmi - oracle| = {worst:.2e} over 200 tables; nmi(x,x) = {self_nmi}; nmi(const,x) = {constant}"),
    )
}

// ---------------------------------------------------------------- 6

fn inertia_of(points: &[f64], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for c in 0..2 {
        let members: Vec<f64> = points.iter().zip(labels).filter(|&(_, &l)| l == c).map(|(&p, _)| p).collect();
        if members.is_empty() {
            return f64::INFINITY;
        }
        let m = mean(&members);
        total += members.iter().map(|p| (p - m) * (p - m)).sum::<f64>();
    }
    total
}

fn kmeans_check() -> Outcome {
    let points = [0.0, 1.0, 10.0];
    let x = Matrix::new(3, 1, points.to_vec()).unwrap();
    let oracle = (0..8usize)
        .map(|mask| (0..3).map(|i| (mask >> i) & 1).collect::<Vec<_>>())
        .map(|labels| inertia_of(&points, &labels))
        .fold(f64::INFINITY, f64::min);
    let result = kmeans(&x, &KMeansConfig::new(2)).map_err(|e| e.to_string())?;
    let l = &result.labels;
    let partition_ok = l[0] == l[1] && l[1] != l[2];
    if !(partition_ok && (result.inertia - oracle).abs() < 1e-12 && (oracle - 0.5).abs() < 1e-12) {
        return Err(format!("labels {l:?} inertia {} (oracle {oracle})", result.inertia));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for instance in 0..100 {
        let n = rng.gen_range(5..60);
        let d = rng.gen_range(1..6);
        let k = rng.gen_range(1..=n.min(8));
        let x = gaussian(n, d, |_| 0.0, 1.0, &mut rng);
        let config = KMeansConfig { restarts: 1, ..KMeansConfig::new(k) };
        let (_, trace) = kmeans_single(&x, &config, instance).map_err(|e| e.to_string())?;
        if trace.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-12) + 1e-12) {
            return Err(format!("instance {instance}: inertia increased: {trace:?}"));
        }
    }
    Ok(format!("{{0,1}}/{{10}} with inertia {} = brute force; inertia non-increasing on 100 instances", result.inertia))
}

// ---------------------------------------------------------------- 7

fn mcnemar_check() -> Outcome {
    let formula = |b: f64, c: f64| ((b - c).abs() - 1.0).powi(2) / (b + c);
    // b counts "a right, b wrong", c the reverse; agreements pad both.
    let vectors = |b: usize, c: usize| {
        let mut a = vec![true; b];
        let mut z = vec![false; b];
        a.extend(vec![false; c]);
        z.extend(vec![true; c]);
        a.extend([true, true, false]);
        z.extend([true, true, false]);
        (a, z)
    };
    let mut lines = vec![];
    for (b, c, significant) in [(20, 0, true), (5, 5, false)] {
        let (x, y) = vectors(b, c);
        let m = mcnemar(&x, &y).map_err(|e| e.to_string())?;
        let want = formula(b as f64, c as f64);
        if (m.statistic - want).abs() > 1e-12 || m.significant != significant {
            return Err(format!("b={b} c={c}: statistic {} significant {}", m.statistic, m.significant));
        }
        lines.push(format!("b={b} c={c} -> {:.2} ({})", m.statistic, if m.significant { "significant" } else { "not significant" }));
    }
    ensure(
        (formula(20.0, 0.0) - 18.05).abs() < 1e-12 && (formula(5.0, 5.0) - 0.1).abs() < 1e-12 && CHI2_1DOF_CRITICAL_001 == 6.635,
        lines.join("; "),
    )
}

// ---------------------------------------------------------------- 8

fn separable_instance(rng: &mut ChaCha8Rng) -> (Matrix, Vec<i8>) {
    let d = rng.gen_range(2..=20);
    let n = rng.gen_range(10..=100);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut w: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    w.iter_mut().for_each(|v| *v /= norm);
    let b = rng.gen_range(-0.2..0.2);
    let (mut rows, mut y) = (vec![], vec![]);
    while rows.len() < n {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let margin = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
        if margin.abs() >= 0.1 {
            y.push(if margin > 0.0 { 1 } else { -1 });
            rows.push(x);
        }
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

fn svm_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let config = SvmConfig::default();
    let mut worst: f64 = 1.0;
    for instance in 0..50 {
        let (x, y) = separable_instance(&mut rng);
        let (model, trace) = svm::train_traced(&x, &y, &config).map_err(|e| e.to_string())?;
        let acc = svm::accuracy(&model, &x, &y).map_err(|e| e.to_string())?;
        worst = worst.min(acc);
        if trace.len() > config.max_epochs {
            return Err(format!("instance {instance}: {} epochs exceed the cap", trace.len()));
        }
        let slack = config.tolerance;
        if trace.windows(2).any(|w| w[1] > w[0] + slack * w[0].abs()) {
            return Err(format!("instance {instance}: objective increased"));
        }
        let again = svm::train(&x, &y, &config).map_err(|e| e.to_string())?;
        let bits = |m: &umclust::LinearModel| {
            (m.weights.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), m.bias.to_bits())
        };
        if bits(&model) != bits(&again) {
            return Err(format!("instance {instance}: repeated training differs"));
        }
    }
    ensure(worst == 1.0, format!("minimum training accuracy {worst} over 50 instances; monotone and deterministic"))
}

// ---------------------------------------------------------------- 9

/// Two blobs whose means differ by 10 sigma along every axis.
fn two_blobs(seed: u64) -> (Matrix, Vec<usize>) {
    let sigma = 0.02;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let (mut data, mut y) = (vec![], vec![]);
    for i in 0..200 {
        let c = i % 2;
        let centre = 0.5 + (c as f64 - 0.5) * 10.0 * sigma;
        data.extend((0..10).map(|_| centre + noise.sample(&mut rng)));
        y.push(c);
    }
    (Matrix::new(200, 10, data).unwrap(), y)
}

fn blobs_end_to_end() -> Outcome {
    let mut lines = vec![];
    let mut ok = true;
    for seed in 0..3u64 {
        let (x, y) = two_blobs(seed);
        let mut random = ClusteringConfig::random_centroids(2, 20);
        random.seed = seed;
        let spec = AugmentationSpec::noise_only(0.05, 3, seed);
        let mut augmented = ClusteringConfig::augment(2, ImageShape::new(10, 1, 1), spec);
        augmented.seed = seed;
        let acc = |config: &ClusteringConfig| -> Result<f64, String> {
            let result = cluster(&x, config).map_err(|e| e.to_string())?;
            clustering_accuracy(&result.assignment, &y).map_err(|e| e.to_string())
        };
        let (r, a) = (acc(&random)?, acc(&augmented)?);
        ok &= r == 1.0 && a == 1.0;
        lines.push(format!("seed {seed}: random-centroid {r}, noise augmentation {a}"));
    }
    ensure(ok, lines.join("; "))
}

// ---------------------------------------------------------------- 10

fn cache_and_replay() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let centres: Vec<f64> = (0..4).map(|c| c as f64).collect();
    let mut rows = vec![];
    for i in 0..240 {
        let noise = Normal::new(0.0, 0.3).unwrap();
        rows.push((0..12).map(|_| centres[i % 4] + noise.sample(&mut rng)).collect::<Vec<_>>());
    }
    let x = Matrix::from_rows(&rows).unwrap();
    let mut config = ClusteringConfig::random_centroids(4, 30);
    config.seed = 10;
    config.unmasking.iterations = 4;

    let (initial, rows) = clusterer::initialize(&x, &config).map_err(|e| e.to_string())?;
    if initial.active_count() != 30 {
        return Err(format!("expected 30 initial clusters, got {}", initial.active_count()));
    }
    let result = clusterer::cluster_from(&rows, initial.clone(), &config).map_err(|e| e.to_string())?;
    let replayed = replay_merges(initial.assignment(), &result.premerge_log, &result.merge_log);
    if replayed != result.assignment {
        return Err("replaying the merge log does not reproduce the assignment".into());
    }

    // Score all pairs, merge a few, and compare surviving cache entries with
    // fresh evaluations.
    let mut state = initial;
    premerge_small_clusters(&rows, &mut state, config.unmasking.min_samples_per_cluster, config.target_k)
        .map_err(|e| e.to_string())?;
    fill_score_cache(&rows, &mut state, &config.unmasking).map_err(|e| e.to_string())?;
    let ids: Vec<usize> = state.active_clusters().collect();
    state.merge(ids[0], ids[1]).map_err(|e| e.to_string())?;
    state.merge(ids[2], ids[3]).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for ((a, b), cached) in state.cached_pairs().collect::<Vec<_>>() {
        let fresh = score_pair(&rows, &state, a, b, &config.unmasking).map_err(|e| e.to_string())?;
        if fresh.to_bits() != cached.to_bits() {
            return Err(format!("pair ({a}, {b}): cached {cached} but fresh {fresh}"));
        }
        checked += 1;
    }
    state.check_invariants().map_err(|e| e.to_string())?;
    Ok(format!(
        "replay reproduces {} merges; {checked} surviving cached scores equal fresh recomputation bit-for-bit",
        result.premerge_log.len() + result.merge_log.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("MNIST subsample: unmasking vs k-means vs n=1 stub", mnist_subsample),
        ("discrimination: same-distribution vs separated pairs", discrimination),
        ("single informative feature curve", single_feature),
        ("Hungarian ACC vs brute force", hungarian_acc),
        ("NMI vs entropy-formula oracle", nmi_oracle_check),
        ("k-means correctness and monotone inertia", kmeans_check),
        ("McNemar arithmetic", mcnemar_check),
        ("SVM separability, monotone objective, determinism", svm_check),
        ("end-to-end blobs", blobs_end_to_end),
        ("cache and replay invariants", cache_and_replay),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|panic| {
            let message = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(message)
        });
        let seconds = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({seconds:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({seconds:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
