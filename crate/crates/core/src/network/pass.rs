//! Batched forward and backward passes.

use super::spec::{Activation, DenseLayer, LayerOutput, LossKind, NetworkSpec, OutputActivation, ParameterVector, Regularizer};
use crate::data::{argmax, Dataset, DatasetKind};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Decomposition of the objective: `total = error + β · reg`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub error: f64,
    pub reg: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub terms: LossTerms,
    /// Fraction of argmax-correct rows, classification only.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub output: Matrix,
    /// Latent mean and log-variance per row, KL specs only.
    pub latent: Option<(Matrix, Matrix)>,
}

/// `½ Σ (exp(logvar) + μ² − 1 − logvar)`, the KL divergence of
/// N(μ, diag exp(logvar)) to N(0, I).
pub fn kl_to_standard_normal(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(&m, &lv)| lv.exp() + m * m - 1.0 - lv)
        .sum::<f64>()
}

/// `μ + exp(logvar / 2) · ε`, elementwise.
pub fn reparameterize(mu: &[f64], logvar: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != logvar.len() || mu.len() != eps.len() {
        return Err(Error::shape("reparameterize", mu.len(), format!("{} / {}", logvar.len(), eps.len())));
    }
    Ok(mu
        .iter()
        .zip(logvar)
        .zip(eps)
        .map(|((&m, &lv), &e)| m + (0.5 * lv).exp() * e)
        .collect())
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Tape {
    /// Input to each dense layer, N × fan_in.
    inputs: Vec<Vec<f64>>,
    /// Final layer pre-activation (identity) or probabilities (softmax).
    output: Vec<f64>,
    /// Softmax log-probabilities, CE only.
    log_probs: Option<Vec<f64>>,
    latent: Option<LatentTape>,
}

struct LatentTape {
    width: usize,
    mu: Vec<f64>,
    logvar: Vec<f64>,
    eps: Vec<f64>,
}

// z = a·W + b for a batch of `n` rows.
fn affine(a: &[f64], n: usize, layer: &DenseLayer, params: &[f64]) -> Vec<f64> {
    let (fi, fo) = (layer.fan_in, layer.fan_out);
    let w = &params[layer.weights_at..layer.biases_at];
    let b = &params[layer.biases_at..layer.biases_at + fo];
    let mut z = Vec::with_capacity(n * fo);
    for r in 0..n {
        z.extend_from_slice(b);
        let zr = &mut z[r * fo..(r + 1) * fo];
        for (i, &ai) in a[r * fi..(r + 1) * fi].iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            for (zj, &wij) in zr.iter_mut().zip(&w[i * fo..(i + 1) * fo]) {
                *zj += ai * wij;
            }
        }
    }
    z
}

fn check_inputs(spec: &NetworkSpec, params: &ParameterVector, x: &Matrix) -> Result<()> {
    spec.validate()?;
    spec.check_params(params)?;
    if x.cols() != spec.input_width() {
        return Err(Error::shape("network input", spec.input_width(), x.cols()));
    }
    Ok(())
}

fn run_forward(spec: &NetworkSpec, params: &[f64], x: &Matrix, noise: Option<&Matrix>) -> Result<Tape> {
    let n = x.rows();
    let mut a = x.as_slice().to_vec();
    let mut inputs = Vec::new();
    let mut latent = None;
    let mut log_probs = None;
    let layers = spec.layers();
    for layer in &layers {
        let mut z = affine(&a, n, layer, params);
        match layer.output {
            LayerOutput::Hidden(Activation::Sigmoid) => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
            LayerOutput::Hidden(Activation::Identity) => {}
            LayerOutput::Latent => {
                let k = layer.fan_out / 2;
                let eps = match noise {
                    Some(e) if e.rows() == n && e.cols() == k => e.as_slice().to_vec(),
                    Some(e) => {
                        return Err(Error::shape(
                            "latent noise",
                            format!("{n}x{k}"),
                            format!("{}x{}", e.rows(), e.cols()),
                        ))
                    }
                    None => vec![0.0; n * k],
                };
                let mut mu = Vec::with_capacity(n * k);
                let mut logvar = Vec::with_capacity(n * k);
                let mut sample = Vec::with_capacity(n * k);
                for r in 0..n {
                    let row = &z[r * 2 * k..(r + 1) * 2 * k];
                    for j in 0..k {
                        let (m, lv) = (row[j], row[k + j]);
                        mu.push(m);
                        logvar.push(lv);
                        sample.push(m + (0.5 * lv).exp() * eps[r * k + j]);
                    }
                }
                latent = Some(LatentTape {
                    width: k,
                    mu,
                    logvar,
                    eps,
                });
                z = sample;
            }
            LayerOutput::Output(OutputActivation::Identity) => {}
            LayerOutput::Output(OutputActivation::Softmax) => {
                let k = layer.fan_out;
                let mut lp = vec![0.0; n * k];
                for r in 0..n {
                    let row = &mut z[r * k..(r + 1) * k];
                    let m = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
                    for (j, v) in row.iter_mut().enumerate() {
                        lp[r * k + j] = *v - lse;
                        *v = lp[r * k + j].exp();
                    }
                }
                log_probs = Some(lp);
            }
        }
        inputs.push(std::mem::replace(&mut a, z));
    }
    Ok(Tape {
        inputs,
        output: a,
        log_probs,
        latent,
    })
}

/// Network output for a batch. KL specs decode from the latent mean (ε = 0).
pub fn forward(spec: &NetworkSpec, params: &ParameterVector, x: &Matrix) -> Result<ForwardOutput> {
    forward_with_noise(spec, params, x, None)
}

/// Network output with explicit latent noise ε (N × latent width).
pub fn forward_with_noise(
    spec: &NetworkSpec,
    params: &ParameterVector,
    x: &Matrix,
    noise: Option<&Matrix>,
) -> Result<ForwardOutput> {
    check_inputs(spec, params, x)?;
    let tape = run_forward(spec, params.as_slice(), x, noise)?;
    let latent = tape.latent.map(|l| {
        let n = x.rows();
        (
            Matrix::from_raw(n, l.width, l.mu),
            Matrix::from_raw(n, l.width, l.logvar),
        )
    });
    Ok(ForwardOutput {
        output: Matrix::from_raw(x.rows(), spec.output_width(), tape.output),
        latent,
    })
}

fn check_data(spec: &NetworkSpec, params: &ParameterVector, data: &Dataset, beta: f64) -> Result<()> {
    check_inputs(spec, params, data.inputs())?;
    if data.output_dim() != spec.output_width() {
        return Err(Error::shape("network output", spec.output_width(), data.output_dim()));
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    if !(beta >= 0.0) {
        return Err(Error::InvalidArgument(format!("beta must be >= 0, got {beta}")));
    }
    Ok(())
}

fn loss_terms(spec: &NetworkSpec, params: &ParameterVector, data: &Dataset, tape: &Tape, beta: f64) -> LossTerms {
    let n = data.len();
    let k = spec.output_width();
    let y = data.targets().as_slice();
    let error = match spec.loss {
        LossKind::Mse => {
            let sse: f64 = tape.output.iter().zip(y).map(|(f, t)| (f - t) * (f - t)).sum();
            sse / (n * k) as f64
        }
        LossKind::CrossEntropy => {
            let lp = tape.log_probs.as_ref().expect("softmax output records log-probabilities");
            let nll: f64 = lp.iter().zip(y).filter(|(_, &t)| t != 0.0).map(|(l, t)| -t * l).sum();
            nll / n as f64
        }
    };
    let reg = match spec.regularizer {
        Regularizer::None => 0.0,
        Regularizer::L2 => params.norm_squared(),
        Regularizer::Kl { .. } => {
            let l = tape.latent.as_ref().expect("KL spec has a latent layer");
            let total: f64 = l
                .mu
                .chunks(l.width)
                .zip(l.logvar.chunks(l.width))
                .map(|(m, lv)| kl_to_standard_normal(m, lv))
                .sum();
            total / n as f64
        }
    };
    LossTerms {
        error,
        reg,
        total: error + beta * reg,
    }
}

fn accuracy(data: &Dataset, output: &[f64], k: usize) -> Option<f64> {
    if data.kind() != DatasetKind::Classification {
        return None;
    }
    let labels = data.labels();
    let correct = output
        .chunks(k)
        .zip(&labels)
        .filter(|(row, &label)| argmax(row) == label)
        .count();
    Some(correct as f64 / data.len() as f64)
}

/// Error term, regularizer and total loss on a dataset. `noise` is the
/// latent ε for KL specs (zero when absent).
pub fn loss_total(
    spec: &NetworkSpec,
    params: &ParameterVector,
    data: &Dataset,
    beta: f64,
    noise: Option<&Matrix>,
) -> Result<LossTerms> {
    Ok(evaluate(spec, params, data, beta, noise)?.terms)
}

/// Loss decomposition plus accuracy for classification data.
pub fn evaluate(
    spec: &NetworkSpec,
    params: &ParameterVector,
    data: &Dataset,
    beta: f64,
    noise: Option<&Matrix>,
) -> Result<Evaluation> {
    check_data(spec, params, data, beta)?;
    let tape = run_forward(spec, params.as_slice(), data.inputs(), noise)?;
    Ok(Evaluation {
        terms: loss_terms(spec, params, data, &tape, beta),
        accuracy: accuracy(data, &tape.output, spec.output_width()),
    })
}

/// Gradient of the total loss with respect to every parameter.
pub fn gradient(
    spec: &NetworkSpec,
    params: &ParameterVector,
    data: &Dataset,
    beta: f64,
    noise: Option<&Matrix>,
) -> Result<ParameterVector> {
    Ok(loss_and_gradient(spec, params, data, beta, noise)?.1)
}

/// Evaluation and gradient from one forward/backward pass.
pub fn loss_and_gradient(
    spec: &NetworkSpec,
    params: &ParameterVector,
    data: &Dataset,
    beta: f64,
    noise: Option<&Matrix>,
) -> Result<(Evaluation, ParameterVector)> {
    check_data(spec, params, data, beta)?;
    let theta = params.as_slice();
    let tape = run_forward(spec, theta, data.inputs(), noise)?;
    let eval = Evaluation {
        terms: loss_terms(spec, params, data, &tape, beta),
        accuracy: accuracy(data, &tape.output, spec.output_width()),
    };

    let n = data.len();
    let k = spec.output_width();
    let y = data.targets().as_slice();
    // dL/d(output pre-activation)
    let mut delta: Vec<f64> = match spec.loss {
        LossKind::Mse => {
            let scale = 2.0 / (n * k) as f64;
            tape.output.iter().zip(y).map(|(f, t)| scale * (f - t)).collect()
        }
        LossKind::CrossEntropy => {
            let scale = 1.0 / n as f64;
            tape.output.iter().zip(y).map(|(p, t)| scale * (p - t)).collect()
        }
    };

    let mut grad = vec![0.0; theta.len()];
    let layers = spec.layers();
    for (li, layer) in layers.iter().enumerate().rev() {
        let (fi, fo) = (layer.fan_in, layer.fan_out);
        let a = &tape.inputs[li];
        {
            let (gw, gb) = grad[layer.weights_at..layer.biases_at + fo].split_at_mut(fi * fo);
            for r in 0..n {
                let dr = &delta[r * fo..(r + 1) * fo];
                for (g, &d) in gb.iter_mut().zip(dr) {
                    *g += d;
                }
                for (i, &ai) in a[r * fi..(r + 1) * fi].iter().enumerate() {
                    if ai == 0.0 {
                        continue;
                    }
                    for (g, &d) in gw[i * fo..(i + 1) * fo].iter_mut().zip(dr) {
                        *g += ai * d;
                    }
                }
            }
        }
        if li == 0 {
            break;
        }
        // Propagate to this layer's input, then through the previous layer's activation.
        let w = &theta[layer.weights_at..layer.biases_at];
        let mut da = vec![0.0; n * fi];
        for r in 0..n {
            let dr = &delta[r * fo..(r + 1) * fo];
            for (i, out) in da[r * fi..(r + 1) * fi].iter_mut().enumerate() {
                *out = dr.iter().zip(&w[i * fo..(i + 1) * fo]).map(|(d, w)| d * w).sum();
            }
        }
        delta = match layers[li - 1].output {
            LayerOutput::Hidden(Activation::Sigmoid) => da
                .iter()
                .zip(a)
                .map(|(&g, &s)| g * s * (1.0 - s))
                .collect(),
            LayerOutput::Hidden(Activation::Identity) => da,
            LayerOutput::Latent => {
                let l = tape.latent.as_ref().expect("latent tape");
                let kw = l.width;
                let kl_scale = beta / n as f64;
                let mut d = vec![0.0; n * 2 * kw];
                for r in 0..n {
                    for j in 0..kw {
                        let idx = r * kw + j;
                        let g = da[idx];
                        let lv = l.logvar[idx];
                        d[r * 2 * kw + j] = g + kl_scale * l.mu[idx];
                        d[r * 2 * kw + kw + j] = g * l.eps[idx] * 0.5 * (0.5 * lv).exp() + kl_scale * 0.5 * (lv.exp() - 1.0);
                    }
                }
                d
            }
            LayerOutput::Output(_) => unreachable!("output layer is always last"),
        };
    }

    if spec.regularizer == Regularizer::L2 && beta != 0.0 {
        for (g, &t) in grad.iter_mut().zip(theta) {
            *g += 2.0 * beta * t;
        }
    }
    Ok((eval, ParameterVector(grad)))
}
