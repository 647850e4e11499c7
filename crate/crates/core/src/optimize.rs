//! First-order training: SGD, Adam and AdamW, full-batch or mini-batch.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{evaluate, loss_and_gradient, NetworkSpec, ParameterVector};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Adamw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    /// Decoupled decay, AdamW only. The L2 term of the loss is separate.
    pub weight_decay: f64,
    /// Rows per step; `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adamw,
            learning_rate: 1e-3,
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay: 0.0,
            batch_size: None,
            epochs: 2000,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        for (name, b) in [("betas[0]", self.betas.0), ("betas[1]", self.betas.1)] {
            if !(0.0..1.0).contains(&b) {
                problems.push(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.eps > 0.0) {
            problems.push(format!("eps must be > 0, got {}", self.eps));
        }
        if !(self.weight_decay >= 0.0) {
            problems.push(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.epochs == 0 {
            problems.push("epochs must be >= 1".into());
        }
        if self.batch_size == Some(0) {
            problems.push("batch_size must be >= 1 (omit it for full batch)".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Moment estimates carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn new(d: usize) -> Self {
        OptimizerState {
            step: 0,
            first_moment: vec![0.0; d],
            second_moment: vec![0.0; d],
        }
    }
}

/// One parameter update in place.
pub fn optimizer_step(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    params: &mut [f64],
    grad: &[f64],
) -> Result<()> {
    if grad.len() != params.len() || state.first_moment.len() != params.len() {
        return Err(Error::shape("optimizer step", params.len(), grad.len()));
    }
    let lr = config.learning_rate;
    state.step += 1;
    match config.kind {
        OptimizerKind::Sgd => {
            for (p, g) in params.iter_mut().zip(grad) {
                *p -= lr * g;
            }
        }
        OptimizerKind::Adam | OptimizerKind::Adamw => {
            let (b1, b2) = config.betas;
            let t = state.step as i32;
            let c1 = 1.0 - b1.powi(t);
            let c2 = 1.0 - b2.powi(t);
            for (((p, &g), m), v) in params
                .iter_mut()
                .zip(grad)
                .zip(state.first_moment.iter_mut())
                .zip(state.second_moment.iter_mut())
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + config.eps);
            }
            if config.kind == OptimizerKind::Adamw {
                let decay = 1.0 - lr * config.weight_decay;
                for p in params.iter_mut() {
                    *p *= decay;
                }
            }
        }
    }
    Ok(())
}

/// One row per epoch, measured after that epoch's updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub error: f64,
    pub reg: f64,
    pub total: f64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub rows: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.rows.last()
    }

    pub fn best_error(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.error).min_by(f64::total_cmp)
    }

    /// First epoch whose error is at or below `threshold`.
    pub fn epochs_to_threshold(&self, threshold: f64) -> Option<usize> {
        self.rows.iter().find(|r| r.error <= threshold).map(|r| r.epoch)
    }

    /// `epoch,error,reg,total,accuracy`; accuracy is empty for regression.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,error,reg,total,accuracy")?;
        for r in &self.rows {
            let acc = r.accuracy.map(|a| format!("{a:?}")).unwrap_or_default();
            writeln!(out, "{},{:?},{:?},{:?},{}", r.epoch, r.error, r.reg, r.total, acc)?;
        }
        Ok(())
    }
}

/// A run that stopped because the loss stopped being finite.
#[derive(Debug, Clone)]
pub struct Diverged {
    /// Parameters after the last epoch with finite loss.
    pub params: ParameterVector,
    pub history: TrainingHistory,
    pub epoch: usize,
}

#[derive(Debug, Clone)]
pub enum TrainOutcome {
    Completed {
        params: ParameterVector,
        history: TrainingHistory,
    },
    Diverged(Diverged),
}

impl TrainOutcome {
    pub fn params(&self) -> &ParameterVector {
        match self {
            TrainOutcome::Completed { params, .. } => params,
            TrainOutcome::Diverged(d) => &d.params,
        }
    }

    pub fn history(&self) -> &TrainingHistory {
        match self {
            TrainOutcome::Completed { history, .. } => history,
            TrainOutcome::Diverged(d) => &d.history,
        }
    }

    pub fn is_diverged(&self) -> bool {
        matches!(self, TrainOutcome::Diverged(_))
    }

    /// `(params, history)`, or `DivergedLoss`.
    pub fn into_result(self) -> Result<(ParameterVector, TrainingHistory)> {
        match self {
            TrainOutcome::Completed { params, history } => Ok((params, history)),
            TrainOutcome::Diverged(d) => Err(Error::DivergedLoss { epoch: d.epoch }),
        }
    }
}

/// Trains `init` on `data` for `config.epochs` epochs.
///
/// KL specs draw fresh latent noise for every step from the run generator;
/// recorded epoch losses for KL specs are evaluated at the latent mean.
pub fn train(
    spec: &NetworkSpec,
    init: &ParameterVector,
    data: &Dataset,
    beta: f64,
    config: &OptimizerConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    spec.validate()?;
    spec.check_params(init)?;
    let n = data.len();
    let latent = spec.latent_width();
    let mut rng = Rng::new(config.seed);
    let mut params = init.clone();
    let mut state = OptimizerState::new(params.len());
    let mut history = TrainingHistory::default();
    let batch = config.batch_size.map_or(n, |b| b.min(n));
    let full_batch = batch == n;
    let mut order: Vec<usize> = (0..n).collect();

    let draw_noise = |rows: usize, rng: &mut Rng| {
        latent.map(|k| {
            let mut eps = vec![0.0; rows * k];
            rng.fill_normal(&mut eps);
            Matrix::from_raw(rows, k, eps)
        })
    };

    let mut last_good = params.clone();
    for epoch in 1..=config.epochs {
        if full_batch {
            let noise = draw_noise(n, &mut rng);
            let (eval, grad) = loss_and_gradient(spec, &params, data, beta, noise.as_ref())?;
            // For deterministic full-batch runs this pass already measures the
            // previous epoch's result.
            if !eval.terms.total.is_finite() || !grad.is_finite() {
                return Ok(diverged(last_good, history, epoch));
            }
            if latent.is_none() && epoch > 1 {
                history.rows.push(record(epoch - 1, &eval));
            }
            last_good.as_mut_slice().copy_from_slice(params.as_slice());
            optimizer_step(config, &mut state, params.as_mut_slice(), grad.as_slice())?;
        } else {
            rng.shuffle(&mut order);
            for chunk in order.chunks(batch) {
                let sub = data.select(chunk);
                let noise = draw_noise(chunk.len(), &mut rng);
                let (eval, grad) = loss_and_gradient(spec, &params, &sub, beta, noise.as_ref())?;
                if !eval.terms.total.is_finite() || !grad.is_finite() {
                    return Ok(diverged(last_good, history, epoch));
                }
                optimizer_step(config, &mut state, params.as_mut_slice(), grad.as_slice())?;
            }
        }
        if latent.is_some() || !full_batch || epoch == config.epochs {
            let eval = evaluate(spec, &params, data, beta, None)?;
            if !eval.terms.total.is_finite() || !params.is_finite() {
                return Ok(diverged(last_good, history, epoch));
            }
            history.rows.push(record(epoch, &eval));
            last_good.as_mut_slice().copy_from_slice(params.as_slice());
        }
    }
    Ok(TrainOutcome::Completed { params, history })
}

fn record(epoch: usize, eval: &crate::network::Evaluation) -> EpochRecord {
    EpochRecord {
        epoch,
        error: eval.terms.error,
        reg: eval.terms.reg,
        total: eval.terms.total,
        accuracy: eval.accuracy,
    }
}

fn diverged(params: ParameterVector, history: TrainingHistory, epoch: usize) -> TrainOutcome {
    TrainOutcome::Diverged(Diverged { params, history, epoch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_covariance, sample_gaussian, CovarianceSpec, DatasetKind};
    use crate::network::{loss_total, Activation, Regularizer};

    fn sgd(lr: f64) -> OptimizerConfig {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate: lr,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn sgd_single_step() {
        let mut p = vec![1.0];
        let mut s = OptimizerState::new(1);
        optimizer_step(&sgd(0.1), &mut s, &mut p, &[2.0]).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
        optimizer_step(&sgd(0.1), &mut s, &mut p, &[0.0]).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_sign() {
        let cfg = OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 0.01,
            ..OptimizerConfig::default()
        };
        let g = [3.0, -0.002, 50.0];
        let mut p = vec![0.0; 3];
        let mut s = OptimizerState::new(3);
        optimizer_step(&cfg, &mut s, &mut p, &g).unwrap();
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps).
        for (pi, gi) in p.iter().zip(g) {
            let expected = -0.01 * gi / (gi.abs() + 1e-8);
            assert!((pi - expected).abs() < 1e-15);
            assert!((pi.abs() - 0.01).abs() < 1e-7);
        }
    }

    #[test]
    fn adamw_decay_is_decoupled() {
        let cfg = OptimizerConfig {
            kind: OptimizerKind::Adamw,
            learning_rate: 0.1,
            weight_decay: 0.5,
            ..OptimizerConfig::default()
        };
        let mut p = vec![2.0];
        let mut s = OptimizerState::new(1);
        optimizer_step(&cfg, &mut s, &mut p, &[0.0]).unwrap();
        assert!((p[0] - 2.0 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn config_validation_lists_everything() {
        let bad = OptimizerConfig {
            learning_rate: 0.0,
            betas: (1.0, 0.5),
            epochs: 0,
            ..OptimizerConfig::default()
        };
        match bad.validate() {
            Err(Error::Config(list)) => assert_eq!(list.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn linear_task() -> (NetworkSpec, Dataset) {
        let mut spec = NetworkSpec::regression(2, &[3], 1, Regularizer::L2);
        spec.hidden_activation = Activation::Identity;
        let cov = make_covariance(3, 1, 0.9, 1).unwrap();
        (spec, sample_gaussian(&cov, 400, 2).unwrap())
    }

    // Least-squares MSE of y on [x, 1] from the normal equations.
    fn least_squares_mse(data: &Dataset) -> f64 {
        let n = data.len();
        let mut a = Matrix::zeros(n, 3);
        for r in 0..n {
            a[(r, 0)] = data.inputs()[(r, 0)];
            a[(r, 1)] = data.inputs()[(r, 1)];
            a[(r, 2)] = 1.0;
        }
        let y = data.targets().column(0);
        let ata = a.transpose().matmul(&a).unwrap();
        let aty = a.transpose().matvec(&y).unwrap();
        let l = crate::linalg::cholesky(&ata).unwrap();
        // Forward then backward substitution.
        let mut z = [0.0; 3];
        for i in 0..3 {
            z[i] = (aty[i] - (0..i).map(|k| l[(i, k)] * z[k]).sum::<f64>()) / l[(i, i)];
        }
        let mut w = vec![0.0; 3];
        for i in (0..3).rev() {
            w[i] = (z[i] - ((i + 1)..3).map(|k| l[(k, i)] * w[k]).sum::<f64>()) / l[(i, i)];
        }
        let fit = a.matvec(&w).unwrap();
        fit.iter().zip(&y).map(|(f, t)| (f - t).powi(2)).sum::<f64>() / n as f64
    }

    #[test]
    fn linear_network_reaches_least_squares() {
        let (spec, data) = linear_task();
        let init = spec.init_params(&mut Rng::new(3));
        let cfg = OptimizerConfig {
            learning_rate: 0.01,
            epochs: 3000,
            ..OptimizerConfig::default()
        };
        let (_, history) = train(&spec, &init, &data, 0.0, &cfg).unwrap().into_result().unwrap();
        assert_eq!(history.len(), 3000);
        let optimum = least_squares_mse(&data);
        let reached = history.last().unwrap().error;
        assert!(reached <= optimum * 1.01, "{reached} vs {optimum}");
    }

    #[test]
    fn small_step_sgd_is_monotone_on_linear_problem() {
        let (spec, data) = linear_task();
        let init = spec.init_params(&mut Rng::new(4));
        let cfg = OptimizerConfig {
            epochs: 300,
            ..sgd(0.01)
        };
        let (_, history) = train(&spec, &init, &data, 1e-3, &cfg).unwrap().into_result().unwrap();
        for w in history.rows.windows(2) {
            assert!(w[1].total <= w[0].total + 1e-9);
        }
        assert_eq!(history.rows.iter().map(|r| r.epoch).collect::<Vec<_>>(), (1..=300).collect::<Vec<_>>());
    }

    #[test]
    fn history_rows_match_final_loss() {
        let (spec, data) = linear_task();
        let init = spec.init_params(&mut Rng::new(5));
        let cfg = OptimizerConfig { epochs: 20, ..sgd(0.05) };
        let (params, history) = train(&spec, &init, &data, 0.01, &cfg).unwrap().into_result().unwrap();
        let final_loss = loss_total(&spec, &params, &data, 0.01, None).unwrap();
        assert_eq!(history.last().unwrap().total, final_loss.total);
    }

    #[test]
    fn adam_equals_adamw_without_decay() {
        let (spec, data) = linear_task();
        let init = spec.init_params(&mut Rng::new(6));
        let mut cfg = OptimizerConfig {
            kind: OptimizerKind::Adam,
            epochs: 50,
            learning_rate: 0.01,
            ..OptimizerConfig::default()
        };
        let a = train(&spec, &init, &data, 1e-3, &cfg).unwrap().into_result().unwrap();
        cfg.kind = OptimizerKind::Adamw;
        let b = train(&spec, &init, &data, 1e-3, &cfg).unwrap().into_result().unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn training_is_reproducible_with_minibatches_and_noise() {
        let spec = NetworkSpec::vae(3, &[4], 2, &[4], 2);
        let cov = make_covariance(5, 2, 0.9, 2).unwrap();
        let data = sample_gaussian(&cov, 64, 1).unwrap();
        let init = spec.init_params(&mut Rng::new(1));
        let cfg = OptimizerConfig {
            batch_size: Some(16),
            epochs: 10,
            learning_rate: 0.01,
            seed: 9,
            ..OptimizerConfig::default()
        };
        let a = train(&spec, &init, &data, 0.1, &cfg).unwrap().into_result().unwrap();
        let b = train(&spec, &init, &data, 0.1, &cfg).unwrap().into_result().unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = train(&spec, &init, &data, 0.1, &OptimizerConfig { seed: 10, ..cfg }).unwrap().into_result().unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn huge_beta_collapses_to_trivial_model() {
        let spec = NetworkSpec::regression(2, &[15, 15], 1, Regularizer::L2);
        let cov = make_covariance(3, 1, 0.95, 0).unwrap();
        let data = sample_gaussian(&cov, 500, 1).unwrap();
        let init = spec.init_params(&mut Rng::new(2));
        let cfg = OptimizerConfig {
            epochs: 2000,
            learning_rate: 1e-2,
            ..OptimizerConfig::default()
        };
        let (params, history) = train(&spec, &init, &data, 10.0, &cfg).unwrap().into_result().unwrap();
        assert!(params.norm() < 0.1, "norm {}", params.norm());
        let var = data.target_variance();
        assert!((history.last().unwrap().error - var).abs() < 0.1 * var);
    }

    #[test]
    fn divergence_is_reported() {
        let spec = NetworkSpec::regression(1, &[2], 1, Regularizer::L2);
        let data = Dataset::new(
            Matrix::from_rows(&[[1e3], [-1e3]]),
            Matrix::from_rows(&[[1e3], [-1e3]]),
            DatasetKind::Regression,
        )
        .unwrap();
        let mut init = ParameterVector::zeros(spec.param_count());
        init.0[0] = 1.0;
        let cfg = OptimizerConfig { epochs: 500, ..sgd(10.0) };
        let outcome = train(&spec, &init, &data, 1.0, &cfg).unwrap();
        assert!(outcome.is_diverged());
        assert!(outcome.params().is_finite());
        assert!(matches!(outcome.into_result(), Err(Error::DivergedLoss { .. })));
    }

    #[test]
    fn zero_epochs_rejected() {
        let spec = NetworkSpec::regression(1, &[2], 1, Regularizer::L2);
        let data = sample_gaussian(&CovarianceSpec::identity(2, 1).unwrap(), 4, 0).unwrap();
        let cfg = OptimizerConfig { epochs: 0, ..OptimizerConfig::default() };
        assert!(train(&spec, &ParameterVector::zeros(spec.param_count()), &data, 0.0, &cfg).is_err());
    }

    #[test]
    fn history_csv_format() {
        let h = TrainingHistory {
            rows: vec![EpochRecord {
                epoch: 1,
                error: 0.5,
                reg: 2.0,
                total: 0.75,
                accuracy: None,
            }],
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,error,reg,total,accuracy\n1,0.5,2.0,0.75,\n");
        assert_eq!(h.epochs_to_threshold(0.6), Some(1));
        assert_eq!(h.epochs_to_threshold(0.1), None);
    }
}
