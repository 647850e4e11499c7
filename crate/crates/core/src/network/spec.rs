use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

/// What multiplies β in the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Regularizer {
    None,
    /// Squared Euclidean norm of every weight and bias.
    L2,
    /// KL divergence of the latent Gaussian to N(0, I). `latent_layer` indexes
    /// `layer_widths`; the layer feeding it emits mean and log-variance, so
    /// its width is twice the latent width.
    Kl { latent_layer: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Input width, hidden widths, output width.
    pub layer_widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: OutputActivation,
    pub loss: LossKind,
    pub regularizer: Regularizer,
}

/// Activation applied to a dense layer's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerOutput {
    Hidden(Activation),
    /// Mean and log-variance halves, sampled into the next layer's input.
    Latent,
    Output(OutputActivation),
}

/// Position of one dense layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseLayer {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Offset of the `fan_in × fan_out` row-major weight block.
    pub weights_at: usize,
    /// Offset of the `fan_out` bias block, directly after the weights.
    pub biases_at: usize,
    pub output: LayerOutput,
}

impl DenseLayer {
    pub fn param_count(&self) -> usize {
        self.fan_in * self.fan_out + self.fan_out
    }
}

impl NetworkSpec {
    /// Sigmoid regression MLP with identity output and MSE loss.
    pub fn regression(input: usize, hidden: &[usize], output: usize, regularizer: Regularizer) -> Self {
        let mut layer_widths = vec![input];
        layer_widths.extend_from_slice(hidden);
        layer_widths.push(output);
        NetworkSpec {
            layer_widths,
            hidden_activation: Activation::Sigmoid,
            output_activation: OutputActivation::Identity,
            loss: LossKind::Mse,
            regularizer,
        }
    }

    /// Sigmoid classifier with softmax output and cross-entropy loss.
    pub fn classifier(input: usize, hidden: &[usize], classes: usize) -> Self {
        NetworkSpec {
            output_activation: OutputActivation::Softmax,
            loss: LossKind::CrossEntropy,
            ..NetworkSpec::regression(input, hidden, classes, Regularizer::L2)
        }
    }

    /// Encoder `input → encoder_hidden → (μ, log σ²)`, decoder
    /// `latent → decoder_hidden → output`, KL-regularized.
    pub fn vae(input: usize, encoder_hidden: &[usize], latent: usize, decoder_hidden: &[usize], output: usize) -> Self {
        let mut layer_widths = vec![input];
        layer_widths.extend_from_slice(encoder_hidden);
        let latent_layer = layer_widths.len();
        layer_widths.push(latent);
        layer_widths.extend_from_slice(decoder_hidden);
        layer_widths.push(output);
        NetworkSpec {
            layer_widths,
            hidden_activation: Activation::Sigmoid,
            output_activation: OutputActivation::Identity,
            loss: LossKind::Mse,
            regularizer: Regularizer::Kl { latent_layer },
        }
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().expect("validated spec has layers")
    }

    pub fn latent_layer(&self) -> Option<usize> {
        match self.regularizer {
            Regularizer::Kl { latent_layer } => Some(latent_layer),
            _ => None,
        }
    }

    pub fn latent_width(&self) -> Option<usize> {
        self.latent_layer().map(|l| self.layer_widths[l])
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.layer_widths;
        if w.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "network needs at least one hidden layer, got widths {w:?}"
            )));
        }
        if w.contains(&0) {
            return Err(Error::InvalidArgument(format!("layer widths must be >= 1, got {w:?}")));
        }
        match (self.loss, self.output_activation) {
            (LossKind::Mse, OutputActivation::Identity) | (LossKind::CrossEntropy, OutputActivation::Softmax) => {}
            (loss, out) => {
                return Err(Error::InvalidArgument(format!(
                    "loss {loss:?} is not supported with {out:?} output"
                )))
            }
        }
        if let Some(l) = self.latent_layer() {
            if l == 0 || l + 1 >= w.len() {
                return Err(Error::InvalidArgument(format!(
                    "latent layer index {l} must split encoder and decoder (widths {w:?})"
                )));
            }
        }
        Ok(())
    }

    /// Dense layers in order, with parameter offsets.
    pub fn layers(&self) -> Vec<DenseLayer> {
        let latent = self.latent_layer();
        let n = self.layer_widths.len();
        let mut offset = 0;
        let mut out = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let fan_in = self.layer_widths[i];
            let mut fan_out = self.layer_widths[i + 1];
            let output = if i + 1 == n - 1 {
                LayerOutput::Output(self.output_activation)
            } else if Some(i + 1) == latent {
                fan_out *= 2;
                LayerOutput::Latent
            } else {
                LayerOutput::Hidden(self.hidden_activation)
            };
            let layer = DenseLayer {
                fan_in,
                fan_out,
                weights_at: offset,
                biases_at: offset + fan_in * fan_out,
                output,
            };
            offset += layer.param_count();
            out.push(layer);
        }
        out
    }

    /// Total number of weights and biases.
    pub fn param_count(&self) -> usize {
        self.layers().iter().map(DenseLayer::param_count).sum()
    }

    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init_params(&self, rng: &mut Rng) -> ParameterVector {
        let mut values = vec![0.0; self.param_count()];
        for layer in self.layers() {
            let a = 1.0 / (layer.fan_in as f64).sqrt();
            for v in &mut values[layer.weights_at..layer.biases_at] {
                *v = rng.uniform_range(-a, a);
            }
        }
        ParameterVector(values)
    }

    /// Splits a flat vector into per-layer weight and bias slices.
    pub fn unflatten<'a>(&self, params: &'a ParameterVector) -> Result<Vec<LayerParams<'a>>> {
        self.check_params(params)?;
        Ok(self
            .layers()
            .into_iter()
            .map(|layer| LayerParams {
                layer,
                weights: &params.0[layer.weights_at..layer.biases_at],
                biases: &params.0[layer.biases_at..layer.biases_at + layer.fan_out],
            })
            .collect())
    }

    /// Inverse of [`NetworkSpec::unflatten`].
    pub fn flatten(&self, layers: &[LayerParams<'_>]) -> ParameterVector {
        let mut values = Vec::with_capacity(self.param_count());
        for l in layers {
            values.extend_from_slice(l.weights);
            values.extend_from_slice(l.biases);
        }
        ParameterVector(values)
    }

    pub(crate) fn check_params(&self, params: &ParameterVector) -> Result<()> {
        let d = self.param_count();
        if params.len() != d {
            return Err(Error::shape("parameter vector", d, params.len()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerParams<'a> {
    pub layer: DenseLayer,
    pub weights: &'a [f64],
    pub biases: &'a [f64],
}

/// Flat vector θ of all weights and biases, layer by layer (weights first).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn zeros(d: usize) -> Self {
        ParameterVector(vec![0.0; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    /// Euclidean distance to the origin.
    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        ParameterVector(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_counts() {
        let s = NetworkSpec::regression(2, &[15, 15], 1, Regularizer::L2);
        assert_eq!(s.param_count(), 2 * 15 + 15 + 15 * 15 + 15 + 15 + 1);
        let m = NetworkSpec::classifier(784, &[15, 15], 10);
        assert_eq!(m.param_count(), 784 * 15 + 15 + 15 * 15 + 15 + 15 * 10 + 10);
        // Encoder 3→15→(2+2), decoder 2→15→2.
        let v = NetworkSpec::vae(3, &[15], 2, &[15], 2);
        assert_eq!(v.param_count(), (3 * 15 + 15) + (15 * 4 + 4) + (2 * 15 + 15) + (15 * 2 + 2));
        assert!(v.validate().is_ok());
    }

    #[test]
    fn validation() {
        let mut s = NetworkSpec::regression(2, &[], 1, Regularizer::L2);
        assert!(s.validate().is_err());
        s = NetworkSpec::regression(2, &[0], 1, Regularizer::L2);
        assert!(s.validate().is_err());
        s = NetworkSpec::regression(2, &[4], 1, Regularizer::L2);
        s.loss = LossKind::CrossEntropy;
        assert!(s.validate().is_err());
        s = NetworkSpec::regression(2, &[4], 1, Regularizer::Kl { latent_layer: 2 });
        assert!(s.validate().is_err());
    }

    #[test]
    fn flatten_unflatten_indices() {
        let spec = NetworkSpec::vae(3, &[5], 2, &[4], 2);
        let d = spec.param_count();
        let params = ParameterVector((0..d).map(|i| i as f64).collect());
        let layers = spec.unflatten(&params).unwrap();
        // Every index appears exactly once, in order.
        let mut seen = Vec::new();
        for l in &layers {
            assert_eq!(l.weights.len(), l.layer.fan_in * l.layer.fan_out);
            assert_eq!(l.biases.len(), l.layer.fan_out);
            seen.extend(l.weights.iter().chain(l.biases).map(|&v| v as usize));
        }
        assert_eq!(seen, (0..d).collect::<Vec<_>>());
        assert_eq!(spec.flatten(&layers), params);
    }

    #[test]
    fn init_respects_bounds() {
        let spec = NetworkSpec::regression(4, &[15, 15], 1, Regularizer::L2);
        let p = spec.init_params(&mut Rng::new(1));
        for l in spec.unflatten(&p).unwrap() {
            let a = 1.0 / (l.layer.fan_in as f64).sqrt();
            assert!(l.weights.iter().all(|w| w.abs() <= a));
            assert!(l.biases.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn wrong_length_rejected() {
        let spec = NetworkSpec::regression(2, &[3], 1, Regularizer::L2);
        assert!(spec.unflatten(&ParameterVector::zeros(3)).is_err());
    }
}
