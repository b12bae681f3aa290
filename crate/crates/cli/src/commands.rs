use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use umclust::dataset::{self, LabelSource};
use umclust::evaluation::{self, KMeansConfig, MetricsReport, NmiNormalization};
use umclust::unmasking::{unmask_pair, FeatureStep, UnmaskingConfig};
use umclust::{
    assign_nearest, AugmentationSpec, ClusteringConfig, Dataset, ImageShape, InitStrategy,
    InputFormat, Matrix, MergeMode, SvmConfig,
};

use crate::manifest::{default_manifest_path, write_json, InputDigest, RunManifest};
use crate::CliError;

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Csv,
    Idx,
    Bin,
}

impl From<FormatArg> for InputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => InputFormat::Csv,
            FormatArg::Idx => InputFormat::Idx,
            FormatArg::Bin => InputFormat::Bin,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MergeModeArg {
    Sweep,
    BestPair,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NmiArg {
    Max,
    Arithmetic,
    Geometric,
    Min,
}

/// Where a feature matrix comes from.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InputArgs {
    /// Feature matrix (CSV, IDX3 images, or UMCLUST1 binary).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    /// CSV only: the last column holds labels and is dropped.
    #[arg(long)]
    pub has_labels: bool,
    /// IDX only: companion IDX1 label file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub labels: Option<PathBuf>,
}

impl InputArgs {
    pub fn load(&self) -> Result<Dataset, CliError> {
        let source = match (&self.labels, self.has_labels) {
            (Some(_), true) => {
                return Err(CliError::config("--labels and --has-labels are mutually exclusive"))
            }
            (Some(p), false) => LabelSource::File(p),
            (None, true) => LabelSource::TrailingColumn,
            (None, false) => LabelSource::None,
        };
        Ok(dataset::load(&self.input, self.format.into(), source)?)
    }

    pub fn digests(&self) -> Result<Vec<InputDigest>, CliError> {
        std::iter::once(&self.input)
            .chain(&self.labels)
            .map(|p| InputDigest::of(p))
            .collect()
    }
}

#[derive(Debug, Args)]
pub struct UnmaskingArgs {
    /// Unmasking iterations.
    #[arg(long = "n", default_value_t = 8)]
    pub iterations: usize,
    /// Features removed per iteration, or `auto` for floor(d / (n + 1)).
    #[arg(long = "s", default_value = "auto")]
    pub features_removed: String,
    /// SVM regularization constant.
    #[arg(long = "C", default_value_t = 1.0)]
    pub regularization_c: f64,
    #[arg(long, default_value_t = 200)]
    pub svm_epochs: usize,
    /// Disable per-feature standardization before the SVM.
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long, default_value_t = 4)]
    pub min_cluster_size: usize,
}

impl UnmaskingArgs {
    fn config(&self, seed: u64) -> Result<UnmaskingConfig, CliError> {
        let features_removed: FeatureStep = self.features_removed.parse()?;
        Ok(UnmaskingConfig {
            iterations: self.iterations,
            features_removed,
            min_samples_per_cluster: self.min_cluster_size,
            seed,
            svm: SvmConfig {
                regularization_c: self.regularization_c,
                max_epochs: self.svm_epochs,
                standardize: !self.no_standardize,
                ..SvmConfig::default()
            },
        })
    }
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Target number of clusters.
    #[arg(long = "k")]
    pub target_k: usize,
    /// Initial number of clusters (random-centroid initialization).
    #[arg(long = "K", conflicts_with = "augment")]
    pub initial_k: Option<usize>,
    /// One initial cluster per sample, padded with augmented variants.
    #[arg(long)]
    pub augment: bool,
    /// Image layout as HxWxC; defaults to the IDX header for IDX input.
    #[arg(long)]
    pub image_shape: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub noise_sigma: f64,
    #[arg(long)]
    pub hflip: bool,
    #[arg(long)]
    pub vflip: bool,
    /// Comma-separated rotation angles in degrees.
    #[arg(long, default_value = "-10,10", allow_hyphen_values = true)]
    pub rotations: String,
    #[arg(long, default_value_t = 1.0)]
    pub crop_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    pub brightness: f64,
    /// Artificial variants per sample.
    #[arg(long, default_value_t = 3)]
    pub copies: usize,
    #[command(flatten)]
    pub unmasking: UnmaskingArgs,
    #[arg(long, value_enum, default_value = "sweep")]
    pub merge_mode: MergeModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Result JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Manifest path (default: next to the result).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

impl ClusterArgs {
    fn augmentation(&self) -> Result<AugmentationSpec, CliError> {
        let rotation_degrees = self
            .rotations
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::config(format!("bad --rotations {:?}", self.rotations)))?;
        Ok(AugmentationSpec {
            gaussian_noise_sigma: self.noise_sigma,
            horizontal_flip: self.hflip,
            vertical_flip: self.vflip,
            rotation_degrees,
            crop_fraction: self.crop_fraction,
            brightness_delta: self.brightness,
            copies_per_sample: self.copies,
            seed: umclust::seed::derive(self.seed, 0xa06),
        })
    }

    /// Config with a placeholder image shape for augmentation; the real
    /// shape may only be known after loading IDX input.
    fn config(&self, shape: Option<ImageShape>) -> Result<ClusteringConfig, CliError> {
        let init = match (self.initial_k, self.augment) {
            (Some(initial_k), false) => InitStrategy::RandomCentroids { initial_k },
            (None, true) => InitStrategy::Augment {
                shape: shape.unwrap_or(ImageShape::new(0, 0, 1)),
                spec: self.augmentation()?,
            },
            (None, false) => return Err(CliError::config("one of --K or --augment is required")),
            (Some(_), true) => return Err(CliError::config("--K and --augment are mutually exclusive")),
        };
        Ok(ClusteringConfig {
            target_k: self.target_k,
            init,
            unmasking: self.unmasking.config(self.seed)?,
            merge_mode: match self.merge_mode {
                MergeModeArg::Sweep => MergeMode::Sweep,
                MergeModeArg::BestPair => MergeMode::BestPair,
            },
            seed: self.seed,
        })
    }
}

pub fn cluster(args: ClusterArgs) -> Result<(), CliError> {
    let explicit_shape = args
        .image_shape
        .as_deref()
        .map(str::parse::<ImageShape>)
        .transpose()?;
    args.config(explicit_shape)?.validate()?;

    let mut manifest = RunManifest::new("cluster", &args.input, ());
    let data = manifest.time("load", || args.input.load())?;
    let shape = explicit_shape.or(data.shape());
    if args.augment && shape.is_none() {
        return Err(CliError::config("--augment needs --image-shape for non-IDX input"));
    }
    let config = args.config(shape)?;
    let manifest_path = args.manifest.clone().unwrap_or_else(|| default_manifest_path(&args.out));
    run_cluster(manifest.with_config(config), &data, &args.out, &manifest_path)
}

fn run_cluster(
    mut manifest: RunManifest<ClusteringConfig>,
    data: &Dataset,
    out: &Path,
    manifest_path: &Path,
) -> Result<(), CliError> {
    let config = &manifest.config;
    config.validate_for(data.sample_count(), data.feature_dim())?;
    let config = config.clone();
    let result = manifest.time("cluster", || umclust::cluster(data.features(), &config))?;
    manifest.time("write", || write_json(out, &result))?;
    manifest.finish(out, manifest_path)
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions: result JSON with an `assignment` array, or a label file.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground truth: label file (text or IDX1).
    #[arg(long)]
    pub truth: PathBuf,
    /// Second prediction to compare against `--pred` with McNemar's test.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "max")]
    pub nmi_normalization: NmiArg,
    /// Also write the metrics JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Deserialize)]
struct AssignmentFile {
    assignment: Vec<usize>,
}

fn load_predictions(path: &Path) -> Result<Vec<usize>, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    let trimmed = bytes.iter().position(|b| !b.is_ascii_whitespace()).map(|i| bytes[i]);
    if trimmed == Some(b'{') {
        let file: AssignmentFile = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        return Ok(file.assignment);
    }
    Ok(dataset::load_label_file(path)?)
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let pred = load_predictions(&args.pred)?;
    let truth = dataset::load_label_file(&args.truth)?;
    let norm = match args.nmi_normalization {
        NmiArg::Max => NmiNormalization::Max,
        NmiArg::Arithmetic => NmiNormalization::Arithmetic,
        NmiArg::Geometric => NmiNormalization::Geometric,
        NmiArg::Min => NmiNormalization::Min,
    };
    let mcnemar = match &args.compare {
        Some(path) => {
            let other = load_predictions(path)?;
            let a = evaluation::correctness(&pred, &truth)?;
            let b = evaluation::correctness(&other, &truth)?;
            Some(evaluation::mcnemar(&a, &b)?.into())
        }
        None => None,
    };
    let report = MetricsReport {
        acc: evaluation::clustering_accuracy(&pred, &truth)?,
        nmi: evaluation::nmi_with(&pred, &truth, norm)?,
        mcnemar,
    };
    print_json(&report)?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct KMeansArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long = "k")]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 300)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Serialize)]
struct KMeansOutput {
    k: usize,
    assignment: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    inertia: f64,
    iterations: usize,
}

pub fn kmeans(args: KMeansArgs) -> Result<(), CliError> {
    let config = KMeansConfig {
        k: args.k,
        max_iters: args.max_iters,
        tolerance: args.tolerance,
        seed: args.seed,
        restarts: args.restarts,
    };
    let mut manifest = RunManifest::new("kmeans", &args.input, config);
    check_kmeans(&manifest.config)?;
    let data = manifest.time("load", || args.input.load())?;
    let manifest_path = args.manifest.clone().unwrap_or_else(|| default_manifest_path(&args.out));
    run_kmeans(manifest, &data, &args.out, &manifest_path)
}

fn check_kmeans(config: &KMeansConfig) -> Result<(), CliError> {
    if config.k == 0 {
        return Err(CliError::config("k must be >= 1"));
    }
    if config.restarts == 0 {
        return Err(CliError::config("restarts must be >= 1"));
    }
    Ok(())
}

fn run_kmeans(
    mut manifest: RunManifest<KMeansConfig>,
    data: &Dataset,
    out: &Path,
    manifest_path: &Path,
) -> Result<(), CliError> {
    let config = manifest.config.clone();
    let result = manifest.time("kmeans", || evaluation::kmeans(data.features(), &config))?;
    let output = KMeansOutput {
        k: config.k,
        assignment: result.labels,
        centroids: result.centroids.to_rows(),
        inertia: result.inertia,
        iterations: result.iterations,
    };
    manifest.time("write", || write_json(out, &output))?;
    manifest.finish(out, manifest_path)
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    /// Manifest written by an earlier `cluster` or `kmeans` run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Result path (default: the one recorded in the manifest).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Repeats a recorded run after checking that its inputs are unchanged.
pub fn rerun(args: RerunArgs) -> Result<(), CliError> {
    let bytes = std::fs::read(&args.manifest)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", args.manifest.display())))?;
    let stored: RunManifest<serde_json::Value> = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::io(format!("{}: {e}", args.manifest.display())))?;
    if stored.input.digests()? != stored.inputs {
        return Err(CliError::io("inputs differ from the digests recorded in the manifest"));
    }
    let out = match (&args.out, stored.outputs.get("result")) {
        (Some(out), _) => out.clone(),
        (None, Some(out)) => out.clone(),
        (None, None) => return Err(CliError::config("manifest records no result path; pass --out")),
    };
    let manifest_path = default_manifest_path(&out);
    let bad_config = |e: serde_json::Error| CliError::config(format!("manifest config: {e}"));
    match stored.command.as_str() {
        "cluster" => {
            let config: ClusteringConfig = serde_json::from_value(stored.config.clone()).map_err(bad_config)?;
            let (m, data) = reload(&stored, config)?;
            run_cluster(m, &data, &out, &manifest_path)
        }
        "kmeans" => {
            let config: KMeansConfig = serde_json::from_value(stored.config.clone()).map_err(bad_config)?;
            check_kmeans(&config)?;
            let (m, data) = reload(&stored, config)?;
            run_kmeans(m, &data, &out, &manifest_path)
        }
        other => Err(CliError::config(format!("cannot rerun command {other:?}"))),
    }
}

fn reload<C>(stored: &RunManifest<serde_json::Value>, config: C) -> Result<(RunManifest<C>, Dataset), CliError> {
    let mut manifest = RunManifest::new(&stored.command, &stored.input, config);
    let data = manifest.time("load", || stored.input.load())?;
    Ok((manifest, data))
}

#[derive(Debug, Args)]
pub struct UnmaskArgs {
    #[arg(long)]
    pub input_a: PathBuf,
    #[arg(long)]
    pub input_b: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    #[command(flatten)]
    pub unmasking: UnmaskingArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn unmask_score(args: UnmaskArgs) -> Result<(), CliError> {
    let config = args.unmasking.config(args.seed)?;
    let load = |p: &Path| dataset::load(p, args.format.into(), LabelSource::None);
    let a = load(&args.input_a)?;
    let b = load(&args.input_b)?;
    let curve = unmask_pair(a.features(), b.features(), &config, args.seed)?;
    print_json(&curve)
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Result JSON holding `centroids`.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Deserialize)]
struct CentroidFile {
    centroids: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct Prediction {
    assignment: Vec<usize>,
}

pub fn predict(args: PredictArgs) -> Result<(), CliError> {
    let bytes = std::fs::read(&args.model)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", args.model.display())))?;
    let model: CentroidFile = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::io(format!("{}: {e}", args.model.display())))?;
    let centroids = Matrix::from_rows(&model.centroids).map_err(|e| CliError::io(e.to_string()))?;
    let data = args.input.load()?;
    let prediction = Prediction {
        assignment: assign_nearest(&centroids, data.features())?,
    };
    print_json(&prediction)?;
    if let Some(out) = &args.out {
        write_json(out, &prediction)?;
    }
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string(value).map_err(|e| CliError::io(format!("cannot encode JSON: {e}")))?;
    println!("{text}");
    Ok(())
}
