//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::changepoint::TransitionReport;
use crate::config::{RunConfig, Task};
use crate::error::{Error, Result};
use crate::experiments::{
    beta_sweep, detect_mean_transitions, detect_on_curve, detect_transitions, hysteresis_experiment, label_phases,
    mnist_sweep, read_mean_curve, read_sweep_column, vae_sweep, DetectionConfig, InitPhase, SweepRecord, SweepRow,
    TaskData,
};
use crate::geometry::geometry_sample;
use crate::io::write_atomic;
use crate::network::{Checkpoint, NetworkSpec};
use crate::plot::{emit_svg_plot, PlotStyle, Series};

#[derive(Debug, Parser)]
#[command(name = "geomlab", version, about = "Error-surface curvature across regularization sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the Gaussian training and test sets to CSV.
    GenData(RunArgs),
    /// β-sweep with curvature at every trained point.
    Sweep(RunArgs),
    /// β-sweep of the KL-regularized encoder/decoder.
    VaeSweep(RunArgs),
    /// β-sweep of the MNIST classifier.
    MnistSweep(RunArgs),
    /// Random, intermediate and trivial initializations at one sub-critical β.
    Hysteresis(RunArgs),
    /// Change points of one column of a sweep CSV.
    Analyze(AnalyzeArgs),
    /// SVG plot of one column of a sweep CSV against β.
    Plot(AnalyzeArgs),
    /// Geometry of one checkpoint on the configured training data.
    Curvature(CurvatureArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent sweep points.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    no_curvature: bool,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Sweep CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "error")]
    column: String,
    /// Output directory; without it the result goes to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    penalty: Option<f64>,
    #[arg(long, default_value_t = 2)]
    min_segment: usize,
}

#[derive(Debug, Args)]
struct CurvatureArgs {
    /// Checkpoint JSON.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Error::Config(problems)) => {
            eprintln!("configuration error:");
            for p in problems {
                eprintln!("  - {p}");
            }
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenData(a) => gen_data(&a),
        Command::Sweep(a) => run_sweep(&a, SweepKind::Plain),
        Command::VaeSweep(a) => run_sweep(&a, SweepKind::Vae),
        Command::MnistSweep(a) => run_sweep(&a, SweepKind::Mnist),
        Command::Hysteresis(a) => run_hysteresis(&a),
        Command::Analyze(a) => analyze(&a),
        Command::Plot(a) => plot(&a),
        Command::Curvature(a) => curvature(&a),
    }
}

fn load_config(args: &RunArgs) -> Result<(RunConfig, PathBuf)> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.no_curvature {
        config.sweep.curvature = false;
    }
    if args.workers == Some(0) {
        return Err(Error::Config(vec!["--workers must be >= 1".into()]));
    }
    let out = args.out.clone().unwrap_or_else(|| config.output.dir.clone());
    Ok((config, out))
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    pool.install(f)
}

fn write_text(out: &Path, name: &str, text: &str) -> Result<()> {
    write_atomic(&out.join(name), text.as_bytes())
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<()> {
    write_text(out, name, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn gen_data(args: &RunArgs) -> Result<()> {
    let (config, out) = load_config(args)?;
    if config.task == Task::Mnist {
        return Err(Error::Config(vec!["gen-data samples Gaussian tasks; MNIST is read from IDX files".into()]));
    }
    let cov = config.covariance()?;
    let data = config.load_data()?;
    let mut buf = Vec::new();
    data.train.write_csv(&mut buf)?;
    write_atomic(&out.join("train.csv"), &buf)?;
    buf.clear();
    data.test.write_csv(&mut buf)?;
    write_atomic(&out.join("test.csv"), &buf)?;
    write_json(&out, "covariance.json", &cov)?;
    eprintln!(
        "wrote {} training and {} test rows to {}",
        data.train.len(),
        data.test.len(),
        out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SweepKind {
    Plain,
    Vae,
    Mnist,
}

fn progress_line(start: Instant) -> impl Fn(&SweepRow) + Sync {
    move |r: &SweepRow| {
        let mut line = format!(
            "[seed {}] beta={:.4e} error={:.5} norm={:.4} epochs={}",
            r.seed, r.beta, r.error, r.param_norm, r.epochs_run
        );
        if let Some(a) = r.accuracy {
            line.push_str(&format!(" accuracy={a:.4}"));
        }
        if let Some(ric) = r.ricci {
            line.push_str(&format!(" ricci={ric:.4e}"));
        }
        if r.diverged {
            line.push_str(" DIVERGED");
        }
        eprintln!("{line} ({:.1}s)", start.elapsed().as_secs_f64());
    }
}

/// Runs the configured sweep and returns the data, spec and record.
fn sweep_for(config: &RunConfig, kind: SweepKind, workers: Option<usize>) -> Result<(TaskData, NetworkSpec, SweepRecord)> {
    let expected = match kind {
        SweepKind::Vae => Some(Task::Vae),
        SweepKind::Mnist => Some(Task::Mnist),
        SweepKind::Plain => None,
    };
    if let Some(task) = expected {
        if config.task != task {
            return Err(Error::Config(vec![format!(
                "this command needs task = \"{}\", config has \"{}\"",
                task.name(),
                config.task.name()
            )]));
        }
    }
    let data = config.load_data()?;
    let spec = config.spec_for(&data);
    let sweep = config.sweep_config();
    let start = Instant::now();
    let progress = progress_line(start);
    let record = with_workers(workers, || match config.task {
        Task::Vae => vae_sweep(&sweep, &spec, &data, Some(&progress)),
        Task::Mnist => mnist_sweep(&sweep, &spec, &data, Some(&progress)),
        _ => beta_sweep(&sweep, &spec, &data, Some(&progress)),
    })?;
    Ok((data, spec, record))
}

fn write_sweep_outputs(config: &RunConfig, spec: &NetworkSpec, record: &SweepRecord, out: &Path) -> Result<()> {
    write_text(out, "config.toml", &config.to_toml()?)?;
    write_text(out, "sweep.csv", &record.to_csv())?;
    write_text(out, "reg_terms.csv", &record.reg_terms_csv())?;
    let column = config.detect_column();
    let detection = config.detection();
    let mean = detect_mean_transitions(record, &column, &detection)?;
    write_text(out, "transitions.json", &(mean.to_json()? + "\n"))?;
    for seed in record.seeds() {
        let report = detect_transitions(record, &column, seed, &detection)?;
        write_text(out, &format!("transitions_seed{seed}.json"), &(report.to_json()? + "\n"))?;
        eprintln!(
            "[seed {seed}] {} change point(s) on {column}: {}",
            report.len(),
            describe(&report)
        );
    }
    if config.output.checkpoints {
        for seed in record.seeds() {
            for (i, row) in record.rows_for_seed(seed).into_iter().enumerate() {
                let ckpt = Checkpoint::new(spec.clone(), row.params.clone(), row.beta, seed, row.epochs_run);
                ckpt.save(out.join(format!("checkpoints/seed{seed}/beta{i:03}.json")))?;
            }
        }
    }
    if config.output.plots {
        let mut columns = vec![column.clone(), "param_norm".to_string()];
        if config.sweep.curvature && record.rows.iter().any(|r| !r.curvature_skipped) {
            columns.extend(["ricci", "mean_curvature", "gauss_kronecker"].map(String::from));
        }
        if column != "error" {
            columns.push("error".into());
        }
        for col in columns {
            let svg = sweep_plot(record, &col, &mean, config.sweep.spacing == crate::experiments::Spacing::Log)?;
            write_text(out, &format!("plots/{col}.svg"), &svg)?;
        }
    }
    Ok(())
}

fn describe(report: &TransitionReport) -> String {
    let labels: Vec<String> = report
        .labeled()
        .iter()
        .map(|(l, cp)| format!("{l}={:.4e}", cp.beta))
        .collect();
    if labels.is_empty() {
        "none".into()
    } else {
        labels.join(", ")
    }
}

fn sweep_plot(record: &SweepRecord, column: &str, report: &TransitionReport, log_x: bool) -> Result<String> {
    let series: Vec<Series> = record
        .seeds()
        .into_iter()
        .map(|s| {
            let (b, v) = record.curve(column, s);
            Series::new(format!("seed {s}"), &b, &v)
        })
        .collect();
    let style = PlotStyle {
        title: format!("{column} vs beta"),
        x_label: "beta".into(),
        y_label: column.into(),
        log_x,
        markers: report.change_points.iter().map(|c| c.beta).collect(),
        ..PlotStyle::default()
    };
    emit_svg_plot(&series, &style)
}

fn run_sweep(args: &RunArgs, kind: SweepKind) -> Result<()> {
    let (config, out) = load_config(args)?;
    let (_, spec, record) = sweep_for(&config, kind, args.workers)?;
    write_sweep_outputs(&config, &spec, &record, &out)?;
    eprintln!("wrote {} rows to {}", record.rows.len(), out.join("sweep.csv").display());
    Ok(())
}

#[derive(Serialize)]
struct HysteresisSummary {
    seed: u64,
    beta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    epochs_to_threshold: Vec<(InitPhase, Option<usize>)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn run_hysteresis(args: &RunArgs) -> Result<()> {
    let (mut config, out) = load_config(args)?;
    config.sweep.curvature = false;
    let (data, spec, record) = sweep_for(&config, SweepKind::Plain, args.workers)?;
    write_sweep_outputs(&config, &spec, &record, &out)?;
    let column = config.detect_column();
    let mut summaries = Vec::new();
    for seed in record.seeds() {
        let report = detect_transitions(&record, &column, seed, &config.detection())?;
        let phases = match label_phases(&spec, &record, seed, &report) {
            Ok(p) => p,
            Err(e @ Error::MissingCheckpoint(_)) => {
                eprintln!("[seed {seed}] skipped: {e}");
                summaries.push(HysteresisSummary {
                    seed,
                    beta: config.hysteresis.beta,
                    threshold: None,
                    epochs_to_threshold: Vec::new(),
                    error: Some(e.to_string()),
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let opt = config.hysteresis_optimizer(seed);
        let result = with_workers(args.workers, || {
            hysteresis_experiment(
                &spec,
                &data.train,
                config.hysteresis.beta,
                &phases,
                &opt,
                config.hysteresis.threshold_factor,
            )
        })?;
        phases.trivial.save(out.join(format!("hysteresis/seed{seed}/trivial_init.json")))?;
        phases.intermediate.save(out.join(format!("hysteresis/seed{seed}/intermediate_init.json")))?;
        let mut series = Vec::new();
        for (phase, history) in &result.histories {
            let mut buf = Vec::new();
            history.write_csv(&mut buf)?;
            write_atomic(&out.join(format!("hysteresis/seed{seed}/{}.csv", phase.name())), &buf)?;
            let (x, y): (Vec<f64>, Vec<f64>) = history.rows.iter().map(|r| (r.epoch as f64, r.error)).unzip();
            series.push(Series::new(phase.name(), &x, &y));
        }
        if config.output.plots {
            let style = PlotStyle {
                title: format!("error vs epoch at beta = {:e}", config.hysteresis.beta),
                x_label: "epoch".into(),
                y_label: "error".into(),
                log_x: true,
                ..PlotStyle::default()
            };
            write_text(&out, &format!("plots/hysteresis_seed{seed}.svg"), &emit_svg_plot(&series, &style)?)?;
        }
        eprintln!(
            "[seed {seed}] threshold {:.5}: {}",
            result.threshold,
            result
                .epochs_to_threshold
                .iter()
                .map(|(p, e)| format!("{}={}", p.name(), e.map_or("never".to_string(), |e| e.to_string())))
                .collect::<Vec<_>>()
                .join(" ")
        );
        summaries.push(HysteresisSummary {
            seed,
            beta: result.beta,
            threshold: Some(result.threshold),
            epochs_to_threshold: result.epochs_to_threshold.clone(),
            error: None,
        });
    }
    write_json(&out, "hysteresis.json", &summaries)?;
    if summaries.iter().all(|s| s.error.is_some()) {
        return Err(Error::MissingCheckpoint(
            "no seed produced the two transitions needed for phase-labeled inits".into(),
        ));
    }
    Ok(())
}

fn read_input(path: &Path) -> Result<std::io::BufReader<std::fs::File>> {
    Ok(std::io::BufReader::new(std::fs::File::open(path)?))
}

fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let (betas, values) = read_mean_curve(read_input(&args.input)?, &args.column)?;
    let detection = DetectionConfig {
        penalty: args.penalty,
        min_segment: args.min_segment,
    };
    let report = detect_on_curve(&betas, &values, &detection)?;
    let json = report.to_json()? + "\n";
    match &args.out {
        Some(out) => write_text(out, &format!("transitions_{}.json", args.column), &json)?,
        None => print!("{json}"),
    }
    eprintln!("{} change point(s) on {}: {}", report.len(), args.column, describe(&report));
    Ok(())
}

fn plot(args: &AnalyzeArgs) -> Result<()> {
    let points = read_sweep_column(read_input(&args.input)?, &args.column)?;
    let mut seeds: Vec<u64> = Vec::new();
    for (s, _, _) in &points {
        if !seeds.contains(s) {
            seeds.push(*s);
        }
    }
    let series: Vec<Series> = seeds
        .iter()
        .map(|&s| {
            let (b, v): (Vec<f64>, Vec<f64>) = points
                .iter()
                .filter(|(ps, _, v)| *ps == s && v.is_some())
                .map(|&(_, b, v)| (b, v.unwrap_or(f64::NAN)))
                .unzip();
            Series::new(format!("seed {s}"), &b, &v)
        })
        .collect();
    let (betas, errors) = read_mean_curve(read_input(&args.input)?, "error")?;
    let detection = DetectionConfig {
        penalty: args.penalty,
        min_segment: args.min_segment,
    };
    let markers = if errors.len() >= 2 * detection.min_segment.max(1) {
        detect_on_curve(&betas, &errors, &detection)?
            .change_points
            .iter()
            .map(|c| c.beta)
            .collect()
    } else {
        Vec::new()
    };
    let log_x = points.iter().all(|(_, b, _)| *b > 0.0);
    let style = PlotStyle {
        title: format!("{} vs beta", args.column),
        x_label: "beta".into(),
        y_label: args.column.clone(),
        log_x,
        markers,
        ..PlotStyle::default()
    };
    let svg = emit_svg_plot(&series, &style)?;
    match &args.out {
        Some(out) => write_text(out, &format!("{}.svg", args.column), &svg)?,
        None => print!("{svg}"),
    }
    Ok(())
}

fn curvature(args: &CurvatureArgs) -> Result<()> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let ckpt = Checkpoint::load(&args.input)?;
    let data = config.load_data()?;
    let sample = geometry_sample(&ckpt.spec, &ckpt.params, &data.train, ckpt.beta, &config.geometry())?;
    eprintln!(
        "ricci={:.6e} gauss_kronecker={:.6e} (retained {}) mean_curvature={:.6e} |grad F|={:.6}",
        sample.ricci, sample.gauss_kronecker, sample.gk_retained, sample.mean_curvature, sample.grad_norm_f
    );
    let json = serde_json::to_string_pretty(&sample)? + "\n";
    match &args.out {
        Some(out) => write_text(out, "geometry.json", &json)?,
        None => print!("{json}"),
    }
    Ok(())
}
