//! β-sweeps, phase labeling and hysteresis runs.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::changepoint::{detect_change_points, default_penalty, TransitionReport};
use crate::data::{Dataset, DatasetKind};
use crate::error::{Error, Result};
use crate::geometry::{geometry_sample, GeometryOptions};
use crate::linalg::norm;
use crate::network::{evaluate, gradient, Checkpoint, NetworkSpec, ParameterVector, Regularizer};
use crate::optimize::{train, OptimizerConfig, TrainOutcome, TrainingHistory};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaGrid {
    pub beta_min: f64,
    pub beta_max: f64,
    pub n_points: usize,
    pub spacing: Spacing,
    /// Prepend β = 0 to the grid.
    #[serde(default)]
    pub include_zero: bool,
}

impl BetaGrid {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if !(self.beta_min >= 0.0 && self.beta_min < self.beta_max && self.beta_max.is_finite()) {
            problems.push(format!(
                "sweep: need 0 <= beta_min < beta_max, got {} and {}",
                self.beta_min, self.beta_max
            ));
        }
        if self.spacing == Spacing::Log && !(self.beta_min > 0.0) {
            problems.push("sweep: log spacing needs beta_min > 0 (use include_zero for β = 0)".into());
        }
        if self.n_points < 2 {
            problems.push(format!("sweep: n_points must be >= 2, got {}", self.n_points));
        }
        problems
    }

    /// Strictly increasing β values with both endpoints exact.
    pub fn values(&self) -> Vec<f64> {
        let n = self.n_points;
        let mut out = Vec::with_capacity(n + 1);
        if self.include_zero {
            out.push(0.0);
        }
        for i in 0..n {
            let t = i as f64 / (n - 1) as f64;
            let b = match self.spacing {
                Spacing::Linear => self.beta_min + t * (self.beta_max - self.beta_min),
                Spacing::Log => (self.beta_min.ln() + t * (self.beta_max.ln() - self.beta_min.ln())).exp(),
            };
            out.push(b);
        }
        out[usize::from(self.include_zero)] = self.beta_min;
        *out.last_mut().expect("n_points >= 2") = self.beta_max;
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub grid: BetaGrid,
    /// Warm-start each point from the previous β's parameters.
    pub annealing: bool,
    /// Epochs for warm-started points; the first point always runs
    /// `optimizer.epochs`.
    pub anneal_epochs: Option<usize>,
    pub seeds: Vec<u64>,
    pub optimizer: OptimizerConfig,
    pub geometry: GeometryOptions,
    pub curvature: bool,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = self.grid.validate();
        if self.seeds.is_empty() {
            problems.push("sweep: seeds must not be empty".into());
        }
        if self.anneal_epochs == Some(0) {
            problems.push("sweep: anneal_epochs must be >= 1".into());
        }
        if let Err(Error::Config(p)) = self.optimizer.validate() {
            problems.extend(p.into_iter().map(|m| format!("optimizer: {m}")));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Training split drives optimization and geometry; metrics in the sweep
/// rows are measured on the test split.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: Dataset,
    pub test: Dataset,
}

/// One trained point. Curvature fields are `None` when skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub seed: u64,
    pub epochs_run: usize,
    pub error: f64,
    pub reg: f64,
    pub total: f64,
    pub accuracy: Option<f64>,
    pub param_norm: f64,
    /// ‖∇l‖ of the error on the training split.
    pub grad_norm: f64,
    pub ricci: Option<f64>,
    pub gauss_kronecker: Option<f64>,
    pub gk_retained: Option<usize>,
    pub mean_curvature: Option<f64>,
    pub min_hess_eig: Option<f64>,
    pub max_hess_eig: Option<f64>,
    pub diverged: bool,
    pub curvature_skipped: bool,
    #[serde(skip)]
    pub params: ParameterVector,
}

pub const SWEEP_CSV_HEADER: &str = "beta,seed,epochs_run,error,total,accuracy,param_norm,grad_norm,ricci,\
gauss_kronecker,gk_retained,mean_curvature,min_hess_eig,max_hess_eig,diverged,curvature_skipped";

pub const SWEEP_COLUMNS: [&str; 16] = [
    "beta",
    "seed",
    "epochs_run",
    "error",
    "total",
    "accuracy",
    "param_norm",
    "grad_norm",
    "ricci",
    "gauss_kronecker",
    "gk_retained",
    "mean_curvature",
    "min_hess_eig",
    "max_hess_eig",
    "diverged",
    "curvature_skipped",
];

impl SweepRow {
    /// Numeric value of a CSV column, `None` when empty.
    pub fn column(&self, name: &str) -> Option<f64> {
        match name {
            "beta" => Some(self.beta),
            "seed" => Some(self.seed as f64),
            "epochs_run" => Some(self.epochs_run as f64),
            "error" => Some(self.error),
            "reg" => Some(self.reg),
            "total" => Some(self.total),
            "accuracy" => self.accuracy,
            "param_norm" => Some(self.param_norm),
            "grad_norm" => Some(self.grad_norm),
            "ricci" => self.ricci,
            "gauss_kronecker" => self.gauss_kronecker,
            "gk_retained" => self.gk_retained.map(|r| r as f64),
            "mean_curvature" => self.mean_curvature,
            "min_hess_eig" => self.min_hess_eig,
            "max_hess_eig" => self.max_hess_eig,
            "diverged" => Some(f64::from(u8::from(self.diverged))),
            "curvature_skipped" => Some(f64::from(u8::from(self.curvature_skipped))),
            _ => None,
        }
    }

    fn csv_line(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| format!("{x:?}")).unwrap_or_default()
        }
        format!(
            "{:?},{},{},{:?},{:?},{},{:?},{:?},{},{},{},{},{},{},{},{}",
            self.beta,
            self.seed,
            self.epochs_run,
            self.error,
            self.total,
            opt(self.accuracy),
            self.param_norm,
            self.grad_norm,
            opt(self.ricci),
            opt(self.gauss_kronecker),
            self.gk_retained.map(|r| r.to_string()).unwrap_or_default(),
            opt(self.mean_curvature),
            opt(self.min_hess_eig),
            opt(self.max_hess_eig),
            self.diverged,
            self.curvature_skipped,
        )
    }
}

/// Rows grouped by seed (in configuration order), ascending β within a seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub rows: Vec<SweepRow>,
}

impl SweepRecord {
    pub fn seeds(&self) -> Vec<u64> {
        let mut seeds: Vec<u64> = Vec::new();
        for r in &self.rows {
            if !seeds.contains(&r.seed) {
                seeds.push(r.seed);
            }
        }
        seeds
    }

    pub fn rows_for_seed(&self, seed: u64) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.seed == seed).collect()
    }

    /// `(β, value)` for one seed, skipping rows where the column is empty.
    pub fn curve(&self, column: &str, seed: u64) -> (Vec<f64>, Vec<f64>) {
        self.rows_for_seed(seed)
            .into_iter()
            .filter_map(|r| r.column(column).map(|v| (r.beta, v)))
            .unzip()
    }

    /// Average over seeds at each β present for every seed.
    pub fn mean_curve(&self, column: &str) -> (Vec<f64>, Vec<f64>) {
        mean_over_seeds(self.rows.iter().map(|r| (r.seed, r.beta, r.column(column))))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{SWEEP_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(out, "{}", r.csv_line())?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// `beta,seed,reg` for every row.
    pub fn reg_terms_csv(&self) -> String {
        let mut s = String::from("beta,seed,reg\n");
        for r in &self.rows {
            s.push_str(&format!("{:?},{},{:?}\n", r.beta, r.seed, r.reg));
        }
        s
    }
}

fn mean_over_seeds(points: impl Iterator<Item = (u64, f64, Option<f64>)>) -> (Vec<f64>, Vec<f64>) {
    let mut by_beta: Vec<(f64, Vec<(u64, f64)>)> = Vec::new();
    let mut seeds: Vec<u64> = Vec::new();
    for (seed, beta, value) in points {
        if !seeds.contains(&seed) {
            seeds.push(seed);
        }
        let Some(v) = value else { continue };
        match by_beta.iter_mut().find(|(b, _)| *b == beta) {
            Some((_, vals)) => vals.push((seed, v)),
            None => by_beta.push((beta, vec![(seed, v)])),
        }
    }
    by_beta.sort_by(|a, b| a.0.total_cmp(&b.0));
    by_beta
        .into_iter()
        .filter(|(_, vals)| vals.len() == seeds.len())
        .map(|(b, vals)| (b, vals.iter().map(|(_, v)| v).sum::<f64>() / vals.len() as f64))
        .unzip()
}

/// A numeric column of a sweep CSV, as `(seed, β, value)` triples.
pub fn read_sweep_column<R: BufRead>(input: R, column: &str) -> Result<Vec<(u64, f64, Option<f64>)>> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::MalformedFile("empty sweep file".into()))??;
    let names: Vec<&str> = header.trim().split(',').collect();
    let find = |name: &str| {
        names
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| Error::MalformedFile(format!("sweep file has no `{name}` column")))
    };
    let (ci, bi, si) = (find(column)?, find("beta")?, find("seed")?);
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != names.len() {
            return Err(Error::MalformedFile(format!(
                "line {}: {} fields, header has {}",
                lineno + 2,
                fields.len(),
                names.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            match fields[i] {
                "true" => Ok(1.0),
                "false" => Ok(0.0),
                f => f
                    .parse()
                    .map_err(|_| Error::MalformedFile(format!("line {}: bad number `{f}`", lineno + 2))),
            }
        };
        let seed = fields[si]
            .parse()
            .map_err(|_| Error::MalformedFile(format!("line {}: bad seed", lineno + 2)))?;
        let value = if fields[ci].is_empty() { None } else { Some(num(ci)?) };
        out.push((seed, num(bi)?, value));
    }
    Ok(out)
}

/// Seed-averaged `(β, value)` curve of one column of a sweep CSV.
pub fn read_mean_curve<R: BufRead>(input: R, column: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok(mean_over_seeds(read_sweep_column(input, column)?.into_iter()))
}

/// Called once per finished sweep point.
pub type Progress<'a> = &'a (dyn Fn(&SweepRow) + Sync);

fn run_seed_for_index(seed: u64, index: usize) -> (Rng, u64) {
    let mut rng = Rng::stream(seed, index as u64);
    let train_seed = rng.next_u64();
    (rng, train_seed)
}

fn measure(
    spec: &NetworkSpec,
    data: &TaskData,
    config: &SweepConfig,
    beta: f64,
    seed: u64,
    outcome: &TrainOutcome,
) -> Result<SweepRow> {
    let params = outcome.params().clone();
    let epochs_run = match outcome {
        TrainOutcome::Completed { history, .. } => history.len(),
        TrainOutcome::Diverged(d) => d.epoch,
    };
    let eval = evaluate(spec, &params, &data.test, beta, None)?;
    let grad = gradient(spec, &params, &data.train, 0.0, None)?;
    let mut row = SweepRow {
        beta,
        seed,
        epochs_run,
        error: eval.terms.error,
        reg: eval.terms.reg,
        total: eval.terms.total,
        accuracy: eval.accuracy,
        param_norm: params.norm(),
        grad_norm: norm(grad.as_slice()),
        ricci: None,
        gauss_kronecker: None,
        gk_retained: None,
        mean_curvature: None,
        min_hess_eig: None,
        max_hess_eig: None,
        diverged: outcome.is_diverged(),
        curvature_skipped: true,
        params,
    };
    if config.curvature && row.params.len() <= config.geometry.dimension_cap {
        let g = geometry_sample(spec, &row.params, &data.train, beta, &config.geometry)?;
        row.ricci = Some(g.ricci);
        row.gauss_kronecker = Some(g.gauss_kronecker);
        row.gk_retained = Some(g.gk_retained);
        row.mean_curvature = Some(g.mean_curvature);
        row.min_hess_eig = Some(g.min_hessian_eigenvalue);
        row.max_hess_eig = Some(g.max_hessian_eigenvalue);
        row.curvature_skipped = false;
    }
    Ok(row)
}

fn train_point(
    spec: &NetworkSpec,
    data: &TaskData,
    config: &SweepConfig,
    beta: f64,
    init: &ParameterVector,
    train_seed: u64,
    epochs: usize,
) -> Result<TrainOutcome> {
    let opt = OptimizerConfig {
        seed: train_seed,
        epochs,
        ..config.optimizer.clone()
    };
    train(spec, init, &data.train, beta, &opt)
}

fn annealed_seed(
    spec: &NetworkSpec,
    data: &TaskData,
    config: &SweepConfig,
    betas: &[f64],
    seed: u64,
    progress: Option<Progress<'_>>,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(betas.len());
    let mut params = spec.init_params(&mut run_seed_for_index(seed, 0).0);
    for (i, &beta) in betas.iter().enumerate() {
        let (_, train_seed) = run_seed_for_index(seed, i);
        let epochs = if i == 0 {
            config.optimizer.epochs
        } else {
            config.anneal_epochs.unwrap_or(config.optimizer.epochs)
        };
        let outcome = train_point(spec, data, config, beta, &params, train_seed, epochs)?;
        let row = measure(spec, data, config, beta, seed, &outcome)?;
        if let Some(p) = progress {
            p(&row);
        }
        params = row.params.clone();
        rows.push(row);
    }
    Ok(rows)
}

fn fresh_point(
    spec: &NetworkSpec,
    data: &TaskData,
    config: &SweepConfig,
    beta: f64,
    index: usize,
    seed: u64,
    progress: Option<Progress<'_>>,
) -> Result<SweepRow> {
    let (mut rng, train_seed) = run_seed_for_index(seed, index);
    let init = spec.init_params(&mut rng);
    let outcome = train_point(spec, data, config, beta, &init, train_seed, config.optimizer.epochs)?;
    let row = measure(spec, data, config, beta, seed, &outcome)?;
    if let Some(p) = progress {
        p(&row);
    }
    Ok(row)
}

/// Trains one model per (seed, β) and records metrics and curvature.
///
/// Fresh-init points run on the current rayon pool; annealed sweeps run
/// seeds in parallel and β sequentially. Output order never depends on
/// scheduling.
pub fn beta_sweep(
    config: &SweepConfig,
    spec: &NetworkSpec,
    data: &TaskData,
    progress: Option<Progress<'_>>,
) -> Result<SweepRecord> {
    config.validate()?;
    spec.validate()?;
    let betas = config.grid.values();
    let rows: Vec<SweepRow> = if config.annealing {
        let per_seed: Result<Vec<Vec<SweepRow>>> = config
            .seeds
            .par_iter()
            .map(|&seed| annealed_seed(spec, data, config, &betas, seed, progress))
            .collect();
        per_seed?.into_iter().flatten().collect()
    } else {
        let jobs: Vec<(u64, usize, f64)> = config
            .seeds
            .iter()
            .flat_map(|&s| betas.iter().enumerate().map(move |(i, &b)| (s, i, b)))
            .collect();
        jobs.par_iter()
            .map(|&(seed, i, beta)| fresh_point(spec, data, config, beta, i, seed, progress))
            .collect::<Result<_>>()?
    };
    Ok(SweepRecord { rows })
}

/// [`beta_sweep`] for a KL-regularized encoder/decoder; `reg` holds the KL term.
pub fn vae_sweep(
    config: &SweepConfig,
    spec: &NetworkSpec,
    data: &TaskData,
    progress: Option<Progress<'_>>,
) -> Result<SweepRecord> {
    if !matches!(spec.regularizer, Regularizer::Kl { .. }) {
        return Err(Error::InvalidArgument("vae sweep needs a KL-regularized network".into()));
    }
    beta_sweep(config, spec, data, progress)
}

pub const MIN_MNIST_SUBSET: usize = 100;

/// [`beta_sweep`] for a classifier; curvature is skipped above the
/// dimension cap.
pub fn mnist_sweep(
    config: &SweepConfig,
    spec: &NetworkSpec,
    data: &TaskData,
    progress: Option<Progress<'_>>,
) -> Result<SweepRecord> {
    if data.train.kind() != DatasetKind::Classification {
        return Err(Error::InvalidArgument("mnist sweep needs classification data".into()));
    }
    if data.train.len() < MIN_MNIST_SUBSET {
        return Err(Error::InvalidArgument(format!(
            "training subset of {} images is below the minimum of {MIN_MNIST_SUBSET}",
            data.train.len()
        )));
    }
    beta_sweep(config, spec, data, progress)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    /// Explicit penalty; `None` uses the first-difference default.
    pub penalty: Option<f64>,
    pub min_segment: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            penalty: None,
            min_segment: 2,
        }
    }
}

/// Change points of `values` over `betas`.
pub fn detect_on_curve(betas: &[f64], values: &[f64], detection: &DetectionConfig) -> Result<TransitionReport> {
    let penalty = detection.penalty.unwrap_or_else(|| default_penalty(values));
    detect_change_points(values, Some(betas), penalty, detection.min_segment)
}

/// Change points of one column for one seed.
pub fn detect_transitions(
    record: &SweepRecord,
    column: &str,
    seed: u64,
    detection: &DetectionConfig,
) -> Result<TransitionReport> {
    let (betas, values) = record.curve(column, seed);
    detect_on_curve(&betas, &values, detection)
}

/// Change points of the seed-averaged curve of one column.
pub fn detect_mean_transitions(
    record: &SweepRecord,
    column: &str,
    detection: &DetectionConfig,
) -> Result<TransitionReport> {
    let (betas, values) = record.mean_curve(column);
    detect_on_curve(&betas, &values, detection)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPhase {
    Random,
    Intermediate,
    Trivial,
}

impl InitPhase {
    pub const ALL: [InitPhase; 3] = [InitPhase::Random, InitPhase::Intermediate, InitPhase::Trivial];

    pub fn name(self) -> &'static str {
        match self {
            InitPhase::Random => "random",
            InitPhase::Intermediate => "intermediate",
            InitPhase::Trivial => "trivial",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCheckpoints {
    pub trivial: Checkpoint,
    pub intermediate: Checkpoint,
}

/// Picks hysteresis initializations from one seed's sweep: the trivial
/// checkpoint is the row with the smallest parameter norm, the intermediate
/// one is the first row above `β₁`.
pub fn label_phases(
    spec: &NetworkSpec,
    record: &SweepRecord,
    seed: u64,
    report: &TransitionReport,
) -> Result<PhaseCheckpoints> {
    let rows = record.rows_for_seed(seed);
    if rows.is_empty() {
        return Err(Error::MissingCheckpoint(format!("sweep has no rows for seed {seed}")));
    }
    let beta1 = report.beta_label(1).ok_or_else(|| {
        Error::MissingCheckpoint(format!(
            "seed {seed}: {} change point(s) detected, the intermediate phase needs two",
            report.len()
        ))
    })?;
    let intermediate = rows
        .iter()
        .find(|r| r.beta == beta1.beta)
        .ok_or_else(|| Error::MissingCheckpoint(format!("seed {seed}: no sweep row at beta {}", beta1.beta)))?;
    let trivial = rows
        .iter()
        .min_by(|a, b| a.param_norm.total_cmp(&b.param_norm))
        .expect("non-empty rows");
    let ckpt = |r: &SweepRow| Checkpoint::new(spec.clone(), r.params.clone(), r.beta, seed, r.epochs_run);
    Ok(PhaseCheckpoints {
        trivial: ckpt(trivial),
        intermediate: ckpt(intermediate),
    })
}

/// Trains from `init` at a fixed β and returns the per-epoch curve.
pub fn hysteresis_run(
    spec: &NetworkSpec,
    train_data: &Dataset,
    beta: f64,
    init: &ParameterVector,
    optimizer: &OptimizerConfig,
) -> Result<TrainingHistory> {
    Ok(train(spec, init, train_data, beta, optimizer)?.into_result()?.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HysteresisResult {
    pub seed: u64,
    pub beta: f64,
    pub threshold: f64,
    /// `(phase, epochs to reach the threshold)`; `None` if never reached.
    pub epochs_to_threshold: Vec<(InitPhase, Option<usize>)>,
    #[serde(skip)]
    pub histories: Vec<(InitPhase, TrainingHistory)>,
}

impl HysteresisResult {
    pub fn epochs_for(&self, phase: InitPhase) -> Option<usize> {
        self.epochs_to_threshold.iter().find(|(p, _)| *p == phase).and_then(|(_, e)| *e)
    }

    pub fn history(&self, phase: InitPhase) -> Option<&TrainingHistory> {
        self.histories.iter().find(|(p, _)| *p == phase).map(|(_, h)| h)
    }
}

/// Random, intermediate and trivial initializations trained at the same β.
/// The threshold is `threshold_factor` times the best error of the random run.
pub fn hysteresis_experiment(
    spec: &NetworkSpec,
    train_data: &Dataset,
    beta: f64,
    phases: &PhaseCheckpoints,
    optimizer: &OptimizerConfig,
    threshold_factor: f64,
) -> Result<HysteresisResult> {
    let seed = optimizer.seed;
    let random_init = spec.init_params(&mut Rng::stream(seed, u64::MAX));
    let inits = [
        (InitPhase::Random, &random_init),
        (InitPhase::Intermediate, &phases.intermediate.params),
        (InitPhase::Trivial, &phases.trivial.params),
    ];
    let histories: Vec<(InitPhase, TrainingHistory)> = inits
        .par_iter()
        .map(|&(phase, init)| Ok((phase, hysteresis_run(spec, train_data, beta, init, optimizer)?)))
        .collect::<Result<_>>()?;
    let best = histories[0].1.best_error().ok_or(Error::EmptySeries)?;
    let threshold = threshold_factor * best;
    let epochs_to_threshold = histories
        .iter()
        .map(|(p, h)| (*p, h.epochs_to_threshold(threshold)))
        .collect();
    Ok(HysteresisResult {
        seed,
        beta,
        threshold,
        epochs_to_threshold,
        histories,
    })
}
