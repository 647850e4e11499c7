//! Dense feed-forward networks: sigmoid MLPs for regression and
//! classification, and a VAE-style encoder/decoder whose latent layer is
//! regularized by a KL term.

mod checkpoint;
mod pass;
mod spec;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use pass::{
    evaluate, forward, forward_with_noise, gradient, kl_to_standard_normal, loss_and_gradient, loss_total,
    reparameterize, Evaluation, ForwardOutput, LossTerms,
};
pub use spec::{
    Activation, DenseLayer, LayerOutput, LayerParams, LossKind, NetworkSpec, OutputActivation, ParameterVector,
    Regularizer,
};

use crate::data::Dataset;
use crate::error::Result;
use crate::linalg::Matrix;
use crate::rng::Rng;

/// An architecture together with its current parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: ParameterVector,
}

impl Network {
    pub fn new(spec: NetworkSpec, params: ParameterVector) -> Result<Self> {
        spec.validate()?;
        spec.check_params(&params)?;
        Ok(Network { spec, params })
    }

    pub fn random(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let params = spec.init_params(&mut Rng::new(seed));
        Ok(Network { spec, params })
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardOutput> {
        forward(&self.spec, &self.params, x)
    }

    pub fn loss(&self, data: &Dataset, beta: f64) -> Result<LossTerms> {
        loss_total(&self.spec, &self.params, data, beta, None)
    }

    pub fn gradient(&self, data: &Dataset, beta: f64) -> Result<ParameterVector> {
        gradient(&self.spec, &self.params, data, beta, None)
    }
}
