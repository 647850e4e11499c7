//! Curvature of the error surface viewed as the graph `F(θ, z) = l(θ) − z`
//! embedded in parameter space plus one loss axis.
//!
//! Everything here is a pure function of `(H, ∇l)`, except [`hessian`] and
//! [`geometry_sample`], which evaluate the network.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, outer, sym_eigen, Matrix};
use crate::network::{gradient, NetworkSpec, ParameterVector, Regularizer};

pub const DEFAULT_DIMENSION_CAP: usize = 2000;
pub const DEFAULT_EIGEN_CUTOFF: f64 = 1e-10;
pub const ORACLE_DIMENSION_CAP: usize = 50;

/// Central finite differences of an analytic gradient, symmetrized.
///
/// The step for coordinate `i` is `√eps · max(1, |θ_i|)`, rounded so that
/// `θ_i ± h` is representable.
pub fn fd_hessian<G>(theta: &[f64], mut grad: G) -> Result<Matrix>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let d = theta.len();
    let mut h = Matrix::zeros(d, d);
    let mut point = theta.to_vec();
    let base_step = f64::EPSILON.sqrt();
    for i in 0..d {
        let t = theta[i];
        let step = base_step * t.abs().max(1.0);
        let up = t + step;
        let down = t - step;
        point[i] = up;
        let g_up = grad(&point)?;
        point[i] = down;
        let g_down = grad(&point)?;
        point[i] = t;
        if g_up.len() != d || g_down.len() != d {
            return Err(Error::shape("gradient length", d, g_up.len()));
        }
        let width = up - down;
        for (j, (a, b)) in g_up.iter().zip(&g_down).enumerate() {
            h[(j, i)] = (a - b) / width;
        }
    }
    Ok(h.symmetrize())
}

/// Hessian of the error term, or of the full regularized loss when
/// `include_reg` is set. KL specs are evaluated with the latent noise at zero.
pub fn hessian(
    spec: &NetworkSpec,
    params: &ParameterVector,
    data: &Dataset,
    include_reg: bool,
    beta: f64,
    cap: usize,
) -> Result<Matrix> {
    let d = params.len();
    if d > cap {
        return Err(Error::DimensionCap { dim: d, cap });
    }
    // The L2 term contributes exactly 2β·I, so only the error is differenced.
    let fd_beta = match spec.regularizer {
        Regularizer::Kl { .. } if include_reg => beta,
        _ => 0.0,
    };
    let mut probe = params.clone();
    let mut h = fd_hessian(params.as_slice(), |theta| {
        probe.as_mut_slice().copy_from_slice(theta);
        Ok(gradient(spec, &probe, data, fd_beta, None)?.0)
    })?;
    if include_reg && spec.regularizer == Regularizer::L2 {
        for i in 0..d {
            h[(i, i)] += 2.0 * beta;
        }
    }
    Ok(h)
}

/// `‖∇F‖ = √(1 + ‖∇l‖²)`.
pub fn grad_norm_f(grad: &[f64]) -> f64 {
    (1.0 + dot(grad, grad)).sqrt()
}

/// `g = I + ∇l ∇lᵀ`.
pub fn induced_metric(grad: &[f64]) -> Matrix {
    let mut g = outer(grad, grad);
    for i in 0..grad.len() {
        g[(i, i)] += 1.0;
    }
    g
}

/// `g⁻¹ = I − ∇l ∇lᵀ / ‖∇F‖²` by Sherman–Morrison.
pub fn inverse_metric(grad: &[f64]) -> Matrix {
    let scale = 1.0 / (1.0 + dot(grad, grad));
    let mut g = outer(grad, grad).scale(-scale);
    for i in 0..grad.len() {
        g[(i, i)] += 1.0;
    }
    g
}

/// `II = H / ‖∇F‖`.
pub fn second_fundamental_form(hessian: &Matrix, grad: &[f64]) -> Result<Matrix> {
    check_pair(hessian, grad)?;
    Ok(hessian.scale(1.0 / grad_norm_f(grad)))
}

/// `κ_i = −λ_i / ‖∇F‖`, ordered by ascending Hessian eigenvalue.
pub fn principal_curvatures(hessian: &Matrix, grad: &[f64]) -> Result<Vec<f64>> {
    check_pair(hessian, grad)?;
    let eig = sym_eigen(hessian)?;
    Ok(curvatures_from_eigenvalues(&eig.eigenvalues, grad_norm_f(grad)))
}

fn curvatures_from_eigenvalues(eigenvalues: &[f64], nf: f64) -> Vec<f64> {
    eigenvalues.iter().map(|l| -l / nf).collect()
}

/// Gauss–Kronecker curvature over the eigenvalues with `|λ| ≥ cutoff`,
/// evaluated in log space. Returns `(K, retained count)`.
pub fn gauss_kronecker(hessian: &Matrix, grad: &[f64], cutoff: f64) -> Result<(f64, usize)> {
    check_pair(hessian, grad)?;
    let eig = sym_eigen(hessian)?;
    gauss_kronecker_from_eigenvalues(&eig.eigenvalues, grad, cutoff)
}

fn gauss_kronecker_from_eigenvalues(eigenvalues: &[f64], grad: &[f64], cutoff: f64) -> Result<(f64, usize)> {
    if !(cutoff > 0.0) {
        return Err(Error::InvalidArgument(format!("cutoff must be > 0, got {cutoff}")));
    }
    let mut log_sum = 0.0;
    let mut negative = false;
    let mut retained = 0;
    for &l in eigenvalues {
        if l.abs() >= cutoff {
            log_sum += l.abs().ln();
            negative ^= l < 0.0;
            retained += 1;
        }
    }
    if retained == 0 {
        return Err(Error::AllEigenvaluesCut { cutoff });
    }
    let log_det_g = dot(grad, grad).ln_1p();
    let log_nf = 0.5 * log_det_g;
    let k = (log_sum - retained as f64 * log_nf - log_det_g).exp();
    Ok((if negative { -k } else { k }, retained))
}

/// `H̃ = (tr H − ∇lᵀH∇l / ‖∇F‖²) / ‖∇F‖`.
pub fn mean_curvature(hessian: &Matrix, grad: &[f64]) -> Result<f64> {
    check_pair(hessian, grad)?;
    let big_g = 1.0 + dot(grad, grad);
    let hg = hessian.matvec(grad)?;
    Ok((hessian.trace() - dot(grad, &hg) / big_g) / big_g.sqrt())
}

/// Scalar curvature in closed form:
/// `R = (tr(H)² − tr(H²)) / ‖∇F‖² + 2 ∇lᵀ(H² − tr(H)·H)∇l / ‖∇F‖⁴`.
pub fn ricci_scalar(hessian: &Matrix, grad: &[f64]) -> Result<f64> {
    check_pair(hessian, grad)?;
    if grad.len() == 1 {
        return Ok(0.0);
    }
    let big_g = 1.0 + dot(grad, grad);
    let tr = hessian.trace();
    let tr_sq = hessian.as_slice().iter().map(|x| x * x).sum::<f64>();
    let hg = hessian.matvec(grad)?;
    let quad = dot(&hg, &hg) - tr * dot(grad, &hg);
    Ok((tr * tr - tr_sq) / big_g + 2.0 * quad / (big_g * big_g))
}

/// Scalar curvature by contracting the Gauss-equation Riemann tensor
/// `R_likj = II_lk II_ij − II_lj II_ik` twice with `g⁻¹`. O(d⁴).
pub fn ricci_scalar_oracle(hessian: &Matrix, grad: &[f64]) -> Result<f64> {
    check_pair(hessian, grad)?;
    let d = grad.len();
    if d > ORACLE_DIMENSION_CAP {
        return Err(Error::DimensionCap {
            dim: d,
            cap: ORACLE_DIMENSION_CAP,
        });
    }
    let ii = second_fundamental_form(hessian, grad)?;
    let ginv = inverse_metric(grad);
    let riemann = |l: usize, i: usize, k: usize, j: usize| ii[(l, k)] * ii[(i, j)] - ii[(l, j)] * ii[(i, k)];
    let mut scalar = 0.0;
    for i in 0..d {
        for j in 0..d {
            let mut ricci_ij = 0.0;
            for l in 0..d {
                for k in 0..d {
                    ricci_ij += ginv[(l, k)] * riemann(l, i, k, j);
                }
            }
            scalar += ginv[(i, j)] * ricci_ij;
        }
    }
    Ok(scalar)
}

/// `I_ij = ∂_i l ∂_j l / σ²`.
pub fn fisher_information(grad: &[f64], sigma2: f64) -> Result<Matrix> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma2 must be > 0, got {sigma2}")));
    }
    let mut m = outer(grad, grad);
    for x in m.as_mut_slice() {
        *x /= sigma2;
    }
    Ok(m)
}

pub fn param_distance(params: &[f64]) -> f64 {
    norm(params)
}

fn check_pair(hessian: &Matrix, grad: &[f64]) -> Result<()> {
    if !hessian.is_square() || hessian.rows() != grad.len() {
        return Err(Error::shape("hessian vs gradient", grad.len(), hessian.rows()));
    }
    if !grad.iter().all(|g| g.is_finite()) || !hessian.as_slice().iter().all(|h| h.is_finite()) {
        return Err(Error::InvalidArgument("non-finite hessian or gradient".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryOptions {
    /// Use the full regularized loss instead of the error term.
    pub include_reg: bool,
    pub cutoff: f64,
    pub dimension_cap: usize,
    pub fisher_scale: f64,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        GeometryOptions {
            include_reg: false,
            cutoff: DEFAULT_EIGEN_CUTOFF,
            dimension_cap: DEFAULT_DIMENSION_CAP,
            fisher_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySample {
    pub params: ParameterVector,
    pub grad: Vec<f64>,
    pub hessian: Matrix,
    pub grad_norm_f: f64,
    pub param_norm: f64,
    pub ricci: f64,
    /// Zero when every eigenvalue falls below the cutoff.
    pub gauss_kronecker: f64,
    pub gk_retained: usize,
    pub mean_curvature: f64,
    pub principal_curvatures: Vec<f64>,
    pub min_hessian_eigenvalue: f64,
    pub max_hessian_eigenvalue: f64,
    pub fisher_scale: f64,
}

impl GeometrySample {
    /// Builds every quantity from one gradient and Hessian.
    pub fn from_derivatives(
        params: ParameterVector,
        grad: Vec<f64>,
        hessian: Matrix,
        options: &GeometryOptions,
    ) -> Result<Self> {
        check_pair(&hessian, &grad)?;
        let eig = sym_eigen(&hessian)?;
        let nf = grad_norm_f(&grad);
        let (gauss_kronecker, gk_retained) =
            match gauss_kronecker_from_eigenvalues(&eig.eigenvalues, &grad, options.cutoff) {
                Ok(v) => v,
                Err(Error::AllEigenvaluesCut { .. }) => (0.0, 0),
                Err(e) => return Err(e),
            };
        Ok(GeometrySample {
            param_norm: param_distance(params.as_slice()),
            ricci: ricci_scalar(&hessian, &grad)?,
            mean_curvature: mean_curvature(&hessian, &grad)?,
            principal_curvatures: curvatures_from_eigenvalues(&eig.eigenvalues, nf),
            min_hessian_eigenvalue: eig.eigenvalues.first().copied().unwrap_or(0.0),
            max_hessian_eigenvalue: eig.eigenvalues.last().copied().unwrap_or(0.0),
            gauss_kronecker,
            gk_retained,
            grad_norm_f: nf,
            fisher_scale: options.fisher_scale,
            params,
            grad,
            hessian,
        })
    }

    pub fn fisher_information(&self) -> Result<Matrix> {
        fisher_information(&self.grad, self.fisher_scale)
    }

    pub fn metric(&self) -> Matrix {
        induced_metric(&self.grad)
    }
}

/// Geometry of the error surface (or full loss) at `params`.
pub fn geometry_sample(
    spec: &NetworkSpec,
    params: &ParameterVector,
    data: &Dataset,
    beta: f64,
    options: &GeometryOptions,
) -> Result<GeometrySample> {
    let d = params.len();
    if d > options.dimension_cap {
        return Err(Error::DimensionCap {
            dim: d,
            cap: options.dimension_cap,
        });
    }
    let grad_beta = if options.include_reg { beta } else { 0.0 };
    let grad = gradient(spec, params, data, grad_beta, None)?.0;
    let h = hessian(spec, params, data, options.include_reg, beta, options.dimension_cap)?;
    GeometrySample::from_derivatives(params.clone(), grad, h, options)
}
