//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_mnist_idx, make_covariance, sample_gaussian, CovarianceSpec};
use crate::error::{Error, Result};
use crate::experiments::{BetaGrid, DetectionConfig, Spacing, SweepConfig, TaskData};
use crate::geometry::{GeometryOptions, DEFAULT_DIMENSION_CAP, DEFAULT_EIGEN_CUTOFF};
use crate::network::{Activation, NetworkSpec, Regularizer};
use crate::optimize::OptimizerConfig;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Gauss1d,
    Gauss2d,
    Mnist,
    Vae,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Gauss1d => "gauss1d",
            Task::Gauss2d => "gauss2d",
            Task::Mnist => "mnist",
            Task::Vae => "vae",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    /// Latent width, `vae` only.
    pub latent: usize,
    /// Decoder hidden widths, `vae` only.
    pub decoder_hidden: Vec<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            hidden: vec![15, 15],
            hidden_activation: Activation::Sigmoid,
            latent: 2,
            decoder_hidden: vec![15],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Joint Gaussian dimension; defaults to 3 (`gauss1d`, `vae`) or 5 (`gauss2d`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Target dimensions; defaults to 1 or 2 likewise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dims: Option<usize>,
    pub correlation: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// IDX directory; relative paths resolve against the config file.
    pub mnist_dir: PathBuf,
    pub train_subset: usize,
    pub test_subset: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dim: None,
            output_dims: None,
            correlation: 0.95,
            n_train: 10_000,
            n_test: 10_000,
            mnist_dir: PathBuf::from("data/mnist"),
            train_subset: 2000,
            test_subset: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub beta_min: f64,
    pub beta_max: f64,
    pub n_points: usize,
    pub spacing: Spacing,
    pub include_zero: bool,
    pub annealing: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anneal_epochs: Option<usize>,
    pub seeds: Vec<u64>,
    pub curvature: bool,
    pub include_reg: bool,
    pub eigen_cutoff: f64,
    pub dimension_cap: usize,
    pub fisher_scale: f64,
    /// Column the change-point detector runs on; `error`, or `accuracy` for MNIST.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detect_column: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub penalty: Option<f64>,
    pub min_segment: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            beta_min: 1e-6,
            beta_max: 1e-1,
            n_points: 100,
            spacing: Spacing::Log,
            include_zero: false,
            annealing: false,
            anneal_epochs: None,
            seeds: vec![0],
            curvature: true,
            include_reg: false,
            eigen_cutoff: DEFAULT_EIGEN_CUTOFF,
            dimension_cap: DEFAULT_DIMENSION_CAP,
            fisher_scale: 1.0,
            detect_column: None,
            penalty: None,
            min_segment: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HysteresisConfig {
    pub beta: f64,
    pub epochs: usize,
    pub threshold_factor: f64,
    /// Overrides `optimizer.learning_rate` for the three runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
}

impl Default for HysteresisConfig {
    fn default() -> Self {
        HysteresisConfig {
            beta: 3.5e-4,
            epochs: 6000,
            threshold_factor: 1.25,
            learning_rate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub checkpoints: bool,
    pub plots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            checkpoints: true,
            plots: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    /// Master seed for data generation.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub hysteresis: HysteresisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

const TOP_KEYS: &[&str] = &[
    "task",
    "seed",
    "network",
    "optimizer",
    "sweep",
    "data",
    "hysteresis",
    "output",
];

fn table_keys(table: &str) -> &'static [&'static str] {
    match table {
        "network" => &["hidden", "hidden_activation", "latent", "decoder_hidden"],
        "optimizer" => &[
            "kind",
            "learning_rate",
            "betas",
            "eps",
            "weight_decay",
            "batch_size",
            "epochs",
            "seed",
        ],
        "sweep" => &[
            "beta_min",
            "beta_max",
            "n_points",
            "spacing",
            "include_zero",
            "annealing",
            "anneal_epochs",
            "seeds",
            "curvature",
            "include_reg",
            "eigen_cutoff",
            "dimension_cap",
            "fisher_scale",
            "detect_column",
            "penalty",
            "min_segment",
        ],
        "data" => &[
            "dim",
            "output_dims",
            "correlation",
            "n_train",
            "n_test",
            "mnist_dir",
            "train_subset",
            "test_subset",
        ],
        "hysteresis" => &["beta", "epochs", "threshold_factor", "learning_rate"],
        "output" => &["dir", "checkpoints", "plots"],
        _ => &[],
    }
}

// Every key not in the schema, as dotted paths.
fn unknown_keys(doc: &toml::Table) -> Vec<String> {
    let mut out = Vec::new();
    for (key, value) in doc {
        if !TOP_KEYS.contains(&key.as_str()) {
            out.push(format!("unknown key `{key}`"));
            continue;
        }
        if let toml::Value::Table(t) = value {
            let allowed = table_keys(key);
            for sub in t.keys() {
                if !allowed.contains(&sub.as_str()) {
                    out.push(format!("unknown key `{key}.{sub}`"));
                }
            }
        }
    }
    out
}

impl RunConfig {
    /// Parses and validates; every unknown key and every invalid value is
    /// listed in the returned `Config` error.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(vec![e.to_string()]))?;
        let unknown = unknown_keys(&doc);
        if !unknown.is_empty() {
            return Err(Error::Config(unknown));
        }
        let config: RunConfig =
            RunConfig::deserialize(doc).map_err(|e| Error::Config(vec![e.to_string().trim().to_string()]))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file. A relative `data.mnist_dir` is taken relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        let mut config = RunConfig::from_toml_str(&text)?;
        if config.data.mnist_dir.is_relative() {
            if let Some(base) = path.parent() {
                config.data.mnist_dir = base.join(&config.data.mnist_dir);
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let sweep = &self.sweep;
        let grid = self.grid();
        problems.extend(grid.validate());
        if sweep.seeds.is_empty() {
            problems.push("sweep.seeds must not be empty".into());
        }
        if sweep.anneal_epochs == Some(0) {
            problems.push("sweep.anneal_epochs must be >= 1".into());
        }
        if !(sweep.eigen_cutoff > 0.0) {
            problems.push("sweep.eigen_cutoff must be > 0".into());
        }
        if !(sweep.fisher_scale > 0.0) {
            problems.push("sweep.fisher_scale must be > 0".into());
        }
        if sweep.min_segment == 0 {
            problems.push("sweep.min_segment must be >= 1".into());
        }
        if let Some(p) = sweep.penalty {
            if !(p >= 0.0) {
                problems.push("sweep.penalty must be >= 0".into());
            }
        }
        let column = self.detect_column();
        if !crate::experiments::SWEEP_COLUMNS.contains(&column.as_str()) && column != "reg" {
            problems.push(format!("sweep.detect_column `{column}` is not a sweep column"));
        }
        if let Err(Error::Config(p)) = self.optimizer.validate() {
            problems.extend(p.into_iter().map(|m| format!("optimizer.{m}")));
        }
        let net = &self.network;
        if net.hidden.is_empty() || net.hidden.contains(&0) {
            problems.push("network.hidden needs at least one layer, all widths >= 1".into());
        }
        if self.task == Task::Vae && (net.latent == 0 || net.decoder_hidden.is_empty() || net.decoder_hidden.contains(&0)) {
            problems.push("network.latent and network.decoder_hidden must be >= 1 for the vae task".into());
        }
        let data = &self.data;
        match self.task {
            Task::Mnist => {
                if data.train_subset < crate::experiments::MIN_MNIST_SUBSET {
                    problems.push(format!(
                        "data.train_subset must be >= {}",
                        crate::experiments::MIN_MNIST_SUBSET
                    ));
                }
                if data.test_subset == 0 {
                    problems.push("data.test_subset must be >= 1".into());
                }
            }
            _ => {
                let (dim, out) = self.gaussian_dims();
                if dim < 2 || out == 0 || out >= dim {
                    problems.push(format!(
                        "data: need dim >= 2 and 1 <= output_dims < dim, got dim {dim}, output_dims {out}"
                    ));
                }
                if !(data.correlation > 0.0 && data.correlation < 1.0) {
                    problems.push(format!("data.correlation must lie in (0, 1), got {}", data.correlation));
                }
                if data.n_train == 0 || data.n_test == 0 {
                    problems.push("data.n_train and data.n_test must be >= 1".into());
                }
            }
        }
        let h = &self.hysteresis;
        if !(h.beta >= 0.0) {
            problems.push("hysteresis.beta must be >= 0".into());
        }
        if h.epochs == 0 {
            problems.push("hysteresis.epochs must be >= 1".into());
        }
        if !(h.threshold_factor >= 1.0) {
            problems.push("hysteresis.threshold_factor must be >= 1".into());
        }
        if let Some(lr) = h.learning_rate {
            if !(lr > 0.0) {
                problems.push("hysteresis.learning_rate must be > 0".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn gaussian_dims(&self) -> (usize, usize) {
        let (dim, out) = match self.task {
            Task::Gauss2d => (5, 2),
            _ => (3, 1),
        };
        (self.data.dim.unwrap_or(dim), self.data.output_dims.unwrap_or(out))
    }

    pub fn grid(&self) -> BetaGrid {
        BetaGrid {
            beta_min: self.sweep.beta_min,
            beta_max: self.sweep.beta_max,
            n_points: self.sweep.n_points,
            spacing: self.sweep.spacing,
            include_zero: self.sweep.include_zero,
        }
    }

    pub fn detect_column(&self) -> String {
        self.sweep.detect_column.clone().unwrap_or_else(|| match self.task {
            Task::Mnist => "accuracy".into(),
            _ => "error".into(),
        })
    }

    pub fn detection(&self) -> DetectionConfig {
        DetectionConfig {
            penalty: self.sweep.penalty,
            min_segment: self.sweep.min_segment,
        }
    }

    pub fn geometry(&self) -> GeometryOptions {
        GeometryOptions {
            include_reg: self.sweep.include_reg,
            cutoff: self.sweep.eigen_cutoff,
            dimension_cap: self.sweep.dimension_cap,
            fisher_scale: self.sweep.fisher_scale,
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            grid: self.grid(),
            annealing: self.sweep.annealing,
            anneal_epochs: self.sweep.anneal_epochs,
            seeds: self.sweep.seeds.clone(),
            optimizer: self.optimizer.clone(),
            geometry: self.geometry(),
            curvature: self.sweep.curvature,
        }
    }

    /// Hysteresis optimizer for one seed.
    pub fn hysteresis_optimizer(&self, seed: u64) -> OptimizerConfig {
        OptimizerConfig {
            epochs: self.hysteresis.epochs,
            learning_rate: self.hysteresis.learning_rate.unwrap_or(self.optimizer.learning_rate),
            seed,
            ..self.optimizer.clone()
        }
    }

    pub fn network_spec(&self, input: usize, output: usize) -> NetworkSpec {
        let net = &self.network;
        let mut spec = match self.task {
            Task::Mnist => NetworkSpec::classifier(input, &net.hidden, output),
            Task::Vae => NetworkSpec::vae(input, &net.hidden, net.latent, &net.decoder_hidden, output),
            Task::Gauss1d | Task::Gauss2d => NetworkSpec::regression(input, &net.hidden, output, Regularizer::L2),
        };
        spec.hidden_activation = net.hidden_activation;
        spec
    }

    pub fn covariance(&self) -> Result<CovarianceSpec> {
        let (dim, out) = self.gaussian_dims();
        make_covariance(dim, out, self.data.correlation, self.seed)
    }

    /// Training and test splits. Gaussian splits are independent draws from
    /// seeds derived from the master seed.
    pub fn load_data(&self) -> Result<TaskData> {
        match self.task {
            Task::Mnist => {
                let dir = &self.data.mnist_dir;
                let train = load_mnist_idx(
                    dir.join("train-images-idx3-ubyte"),
                    dir.join("train-labels-idx1-ubyte"),
                    Some(self.data.train_subset),
                )?;
                let test = load_mnist_idx(
                    dir.join("t10k-images-idx3-ubyte"),
                    dir.join("t10k-labels-idx1-ubyte"),
                    Some(self.data.test_subset),
                )?;
                Ok(TaskData { train, test })
            }
            _ => {
                let cov = self.covariance()?;
                let mut rng = Rng::stream(self.seed, 1);
                let train = sample_gaussian(&cov, self.data.n_train, rng.next_u64())?;
                let test = sample_gaussian(&cov, self.data.n_test, rng.next_u64())?;
                Ok(TaskData { train, test })
            }
        }
    }

    pub fn spec_for(&self, data: &TaskData) -> NetworkSpec {
        self.network_spec(data.train.input_dim(), data.train.output_dim())
    }
}
