//! Datasets: correlated Gaussian regression tasks and MNIST classification.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, Matrix};
use crate::rng::Rng;

pub mod idx;

pub use idx::load_mnist_idx;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Regression,
    Classification,
}

/// Samples as rows: `inputs` is N × input_dim, `targets` N × output_dim.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    targets: Matrix,
    kind: DatasetKind,
}

impl Dataset {
    pub fn new(inputs: Matrix, targets: Matrix, kind: DatasetKind) -> Result<Self> {
        if inputs.rows() != targets.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} input rows vs {} target rows",
                inputs.rows(),
                targets.rows()
            )));
        }
        if kind == DatasetKind::Classification {
            for i in 0..targets.rows() {
                let row = targets.row(i);
                let ones = row.iter().filter(|&&v| v == 1.0).count();
                let zeros = row.iter().filter(|&&v| v == 0.0).count();
                if ones != 1 || ones + zeros != row.len() {
                    return Err(Error::InvalidArgument(format!("target row {i} is not one-hot")));
                }
            }
        }
        Ok(Dataset { inputs, targets, kind })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn targets(&self) -> &Matrix {
        &self.targets
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.cols()
    }

    /// Rows `[start, end)` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        let end = end.min(self.len());
        let start = start.min(end);
        self.select(&(start..end).collect::<Vec<_>>())
    }

    /// Rows in the given order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        let gather = |m: &Matrix| {
            let mut data = Vec::with_capacity(rows.len() * m.cols());
            for &r in rows {
                data.extend_from_slice(m.row(r));
            }
            Matrix::from_raw(rows.len(), m.cols(), data)
        };
        Dataset {
            inputs: gather(&self.inputs),
            targets: gather(&self.targets),
            kind: self.kind,
        }
    }

    /// Variance of the targets, averaged over output dimensions. This is the
    /// MSE of the best constant predictor.
    pub fn target_variance(&self) -> f64 {
        let n = self.len() as f64;
        let k = self.output_dim();
        let mut total = 0.0;
        for j in 0..k {
            let col = self.targets.column(j);
            let mean = col.iter().sum::<f64>() / n;
            total += col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        }
        total / k as f64
    }

    /// Class index per row (argmax of the one-hot target).
    pub fn labels(&self) -> Vec<usize> {
        (0..self.len()).map(|i| argmax(self.targets.row(i))).collect()
    }

    /// CSV with a header row `x0,..,y0,..`, one sample per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header: Vec<String> = (0..self.input_dim()).map(|i| format!("x{i}")).collect();
        header.extend((0..self.output_dim()).map(|j| format!("y{j}")));
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let fields: Vec<String> = self
                .inputs
                .row(i)
                .iter()
                .chain(self.targets.row(i))
                .map(|v| format!("{v:?}"))
                .collect();
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Joint covariance of `(X, Y)`; the first `input_dims` coordinates are inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub dim: usize,
    pub matrix: Matrix,
    pub input_dims: usize,
    pub output_dims: usize,
    /// Largest |corr(x_i, y_j)| over all input/output pairs.
    pub xy_correlation: f64,
}

const ROTATION_BUDGET: usize = 100_000;
const MAX_ROTATION_ANGLE: f64 = 0.05;

impl CovarianceSpec {
    pub fn new(matrix: Matrix, input_dims: usize) -> Result<Self> {
        if !matrix.is_square() || input_dims == 0 || input_dims >= matrix.rows() {
            return Err(Error::InvalidArgument(format!(
                "covariance of shape {}x{} cannot be split after {input_dims} inputs",
                matrix.rows(),
                matrix.cols()
            )));
        }
        cholesky(&matrix)?;
        let dim = matrix.rows();
        let xy_correlation = max_xy_correlation(&matrix, input_dims);
        Ok(CovarianceSpec {
            dim,
            matrix,
            input_dims,
            output_dims: dim - input_dims,
            xy_correlation,
        })
    }

    /// Identity covariance, i.e. independent unit-variance coordinates.
    pub fn identity(dim: usize, input_dims: usize) -> Result<Self> {
        CovarianceSpec::new(Matrix::identity(dim), input_dims)
    }
}

/// Largest absolute correlation between an input and an output coordinate.
pub fn max_xy_correlation(sigma: &Matrix, input_dims: usize) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..input_dims {
        for j in input_dims..sigma.rows() {
            let c = sigma[(i, j)] / (sigma[(i, i)] * sigma[(j, j)]).sqrt();
            best = best.max(c.abs());
        }
    }
    best
}

/// Diagonal variances the rotations start from: geometric from 1 down to
/// 0.01. An x/y correlation ρ needs an eigenvalue ratio of at least
/// (1 + ρ)/(1 − ρ), so the spread must be wide.
pub fn seed_variances(dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|k| 100f64.powf(-(k as f64) / (dim - 1) as f64))
        .collect()
}

/// Rotates a diagonal covariance by small random Givens rotations in
/// input/output coordinate planes until some input/output pair reaches
/// `target_correlation`.
pub fn make_covariance(
    dim: usize,
    output_dims: usize,
    target_correlation: f64,
    seed: u64,
) -> Result<CovarianceSpec> {
    if dim < 2 || output_dims == 0 || output_dims >= dim {
        return Err(Error::InvalidArgument(format!(
            "need dim >= 2 with 1 <= output_dims < dim (got dim {dim}, output_dims {output_dims})"
        )));
    }
    if !(target_correlation > 0.0 && target_correlation < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target correlation must lie in (0, 1), got {target_correlation}"
        )));
    }
    let input_dims = dim - output_dims;
    let mut sigma = Matrix::from_diag(&seed_variances(dim));
    let mut rng = Rng::new(seed);
    let mut best = 0.0f64;
    for _ in 0..ROTATION_BUDGET {
        let i = rng.below(input_dims);
        let j = input_dims + rng.below(output_dims);
        let angle = rng.uniform_range(0.0, MAX_ROTATION_ANGLE);
        givens_congruence(&mut sigma, i, j, angle);
        let corr = max_xy_correlation(&sigma, input_dims);
        best = best.max(corr);
        if corr >= target_correlation {
            // Rotations keep the matrix symmetric only up to rounding.
            let sigma = sigma.symmetrize();
            return CovarianceSpec::new(sigma, input_dims);
        }
    }
    Err(Error::Timeout {
        target: target_correlation,
        rotations: ROTATION_BUDGET,
        best,
    })
}

// Σ ← G Σ Gᵀ for the rotation by `angle` in the (i, j) plane.
fn givens_congruence(sigma: &mut Matrix, i: usize, j: usize, angle: f64) {
    let (s, c) = angle.sin_cos();
    let n = sigma.rows();
    for k in 0..n {
        let a = sigma[(i, k)];
        let b = sigma[(j, k)];
        sigma[(i, k)] = c * a - s * b;
        sigma[(j, k)] = s * a + c * b;
    }
    for k in 0..n {
        let a = sigma[(k, i)];
        let b = sigma[(k, j)];
        sigma[(k, i)] = c * a - s * b;
        sigma[(k, j)] = s * a + c * b;
    }
}

/// Draws `n` iid rows from N(0, Σ) as `L·z` with `z` standard normal.
pub fn sample_gaussian(spec: &CovarianceSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let l = cholesky(&spec.matrix)?;
    let dim = spec.dim;
    let mut rng = Rng::new(seed);
    let mut z = vec![0.0; dim];
    let mut inputs = Vec::with_capacity(n * spec.input_dims);
    let mut targets = Vec::with_capacity(n * spec.output_dims);
    for _ in 0..n {
        rng.fill_normal(&mut z);
        for r in 0..dim {
            let v: f64 = l.row(r)[..=r].iter().zip(&z).map(|(a, b)| a * b).sum();
            if r < spec.input_dims {
                inputs.push(v);
            } else {
                targets.push(v);
            }
        }
    }
    Dataset::new(
        Matrix::from_raw(n, spec.input_dims, inputs),
        Matrix::from_raw(n, spec.output_dims, targets),
        DatasetKind::Regression,
    )
}
