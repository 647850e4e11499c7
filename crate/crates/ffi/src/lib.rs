//! C ABI over geomlab.
//!
//! Every fallible function returns a [`GlStatus`]. On failure the message is
//! kept per thread and read with [`gl_last_error_message`]. Networks and
//! datasets are opaque handles released with their `_free` functions.
//! Matrices are dense row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use geomlab::changepoint::{default_penalty, detect_change_points};
use geomlab::data::{make_covariance, sample_gaussian, Dataset, DatasetKind};
use geomlab::geometry::{self, GeometryOptions};
use geomlab::linalg::Matrix;
use geomlab::network::{self, Checkpoint, NetworkSpec, ParameterVector, Regularizer};
use geomlab::rng::Rng;
use geomlab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Numerical = 4,
    DimensionCap = 5,
    Io = 6,
    Format = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Trained-model geometry at one parameter vector.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GlGeometry {
    pub ricci: f64,
    pub gauss_kronecker: f64,
    pub gk_retained: usize,
    pub mean_curvature: f64,
    pub grad_norm_f: f64,
    pub param_norm: f64,
    pub min_hessian_eigenvalue: f64,
    pub max_hessian_eigenvalue: f64,
}

/// Opaque network handle: an architecture and its parameters.
pub struct GlNetwork {
    spec: NetworkSpec,
    params: ParameterVector,
}

/// Opaque dataset handle.
pub struct GlDataset {
    data: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> GlStatus {
    match err {
        Error::ShapeMismatch { .. } | Error::DimensionMismatch(_) => GlStatus::ShapeMismatch,
        Error::NotPositiveDefinite { .. }
        | Error::NotSymmetric { .. }
        | Error::NoConvergence { .. }
        | Error::Timeout { .. }
        | Error::DivergedLoss { .. }
        | Error::AllEigenvaluesCut { .. } => GlStatus::Numerical,
        Error::DimensionCap { .. } => GlStatus::DimensionCap,
        Error::Io(_) => GlStatus::Io,
        Error::BadMagic { .. } | Error::VersionMismatch { .. } | Error::MalformedFile(_) | Error::Json(_) => {
            GlStatus::Format
        }
        _ => GlStatus::InvalidArgument,
    }
}

struct Failure(GlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: GlStatus, message: impl Into<String>) -> Failure {
    Failure(status, message.into())
}

// Runs `f`, records any failure or panic, and returns the status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GlStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            GlStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(fail(GlStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(fail(GlStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn out<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| fail(GlStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| fail(GlStatus::NullPointer, format!("{what} is null")))
}

fn square(values: &[f64], d: usize) -> Result<Matrix, Failure> {
    Ok(Matrix::from_vec(d, d, values.to_vec())?)
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn gl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Sigmoid regression network `input → hidden… → output` with an L2 term,
/// parameters drawn from `seed`.
///
/// # Safety
/// `hidden` points to `n_hidden` readable values; `out_network` is writable.
#[no_mangle]
pub unsafe extern "C" fn gl_network_new_regression(
    input: usize,
    hidden: *const usize,
    n_hidden: usize,
    output: usize,
    seed: u64,
    out_network: *mut *mut GlNetwork,
) -> GlStatus {
    guard(|| {
        let out_network = out(out_network, "out_network")?;
        let hidden = slice(hidden, n_hidden, "hidden")?;
        let spec = NetworkSpec::regression(input, hidden, output, Regularizer::L2);
        spec.validate()?;
        let params = spec.init_params(&mut Rng::new(seed));
        *out_network = Box::into_raw(Box::new(GlNetwork { spec, params }));
        Ok(())
    })
}

/// Sigmoid softmax classifier with `classes` outputs.
///
/// # Safety
/// As for [`gl_network_new_regression`].
#[no_mangle]
pub unsafe extern "C" fn gl_network_new_classifier(
    input: usize,
    hidden: *const usize,
    n_hidden: usize,
    classes: usize,
    seed: u64,
    out_network: *mut *mut GlNetwork,
) -> GlStatus {
    guard(|| {
        let out_network = out(out_network, "out_network")?;
        let hidden = slice(hidden, n_hidden, "hidden")?;
        let spec = NetworkSpec::classifier(input, hidden, classes);
        spec.validate()?;
        let params = spec.init_params(&mut Rng::new(seed));
        *out_network = Box::into_raw(Box::new(GlNetwork { spec, params }));
        Ok(())
    })
}

/// Loads a checkpoint JSON file.
///
/// # Safety
/// `path` is a NUL-terminated UTF-8 string; `out_network` is writable.
#[no_mangle]
pub unsafe extern "C" fn gl_network_load_checkpoint(path: *const c_char, out_network: *mut *mut GlNetwork) -> GlStatus {
    guard(|| {
        let out_network = out(out_network, "out_network")?;
        if path.is_null() {
            return Err(fail(GlStatus::NullPointer, "path is null"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(GlStatus::InvalidArgument, "path is not UTF-8"))?;
        let ckpt = Checkpoint::load(PathBuf::from(path))?;
        *out_network = Box::into_raw(Box::new(GlNetwork {
            spec: ckpt.spec,
            params: ckpt.params,
        }));
        Ok(())
    })
}

/// # Safety
/// `network` is NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gl_network_free(network: *mut GlNetwork) {
    if !network.is_null() {
        drop(Box::from_raw(network));
    }
}

/// Number of parameters, 0 for a NULL handle.
///
/// # Safety
/// `network` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gl_network_param_count(network: *const GlNetwork) -> usize {
    network.as_ref().map_or(0, |n| n.params.len())
}

/// Copies the flat parameter vector into `out_params[0..len]`.
///
/// # Safety
/// `network` is a live handle; `out_params` has `len` writable slots.
#[no_mangle]
pub unsafe extern "C" fn gl_network_get_params(network: *const GlNetwork, out_params: *mut f64, len: usize) -> GlStatus {
    guard(|| {
        let net = handle(network, "network")?;
        if len != net.params.len() {
            return Err(fail(
                GlStatus::ShapeMismatch,
                format!("expected {} parameters, buffer holds {len}", net.params.len()),
            ));
        }
        slice_mut(out_params, len, "out_params")?.copy_from_slice(net.params.as_slice());
        Ok(())
    })
}

/// Replaces the flat parameter vector.
///
/// # Safety
/// `network` is a live handle; `params` has `len` readable values.
#[no_mangle]
pub unsafe extern "C" fn gl_network_set_params(network: *mut GlNetwork, params: *const f64, len: usize) -> GlStatus {
    guard(|| {
        let net = network
            .as_mut()
            .ok_or_else(|| fail(GlStatus::NullPointer, "network is null"))?;
        if len != net.params.len() {
            return Err(fail(
                GlStatus::ShapeMismatch,
                format!("expected {} parameters, got {len}", net.params.len()),
            ));
        }
        net.params.as_mut_slice().copy_from_slice(slice(params, len, "params")?);
        Ok(())
    })
}

/// Copies `n` rows of inputs and targets into a new dataset. Classification
/// targets are one-hot rows.
///
/// # Safety
/// `inputs` holds `n·input_dim` values and `targets` `n·output_dim` values;
/// `out_dataset` is writable.
#[no_mangle]
pub unsafe extern "C" fn gl_dataset_new(
    inputs: *const f64,
    targets: *const f64,
    n: usize,
    input_dim: usize,
    output_dim: usize,
    classification: bool,
    out_dataset: *mut *mut GlDataset,
) -> GlStatus {
    guard(|| {
        let out_dataset = out(out_dataset, "out_dataset")?;
        let x = Matrix::from_vec(n, input_dim, slice(inputs, n * input_dim, "inputs")?.to_vec())?;
        let y = Matrix::from_vec(n, output_dim, slice(targets, n * output_dim, "targets")?.to_vec())?;
        let kind = if classification {
            DatasetKind::Classification
        } else {
            DatasetKind::Regression
        };
        *out_dataset = Box::into_raw(Box::new(GlDataset {
            data: Dataset::new(x, y, kind)?,
        }));
        Ok(())
    })
}

/// `n` draws from a correlated Gaussian: the last `output_dims` of `dim`
/// coordinates are targets.
///
/// # Safety
/// `out_dataset` is writable.
#[no_mangle]
pub unsafe extern "C" fn gl_dataset_gaussian(
    dim: usize,
    output_dims: usize,
    correlation: f64,
    covariance_seed: u64,
    n: usize,
    sample_seed: u64,
    out_dataset: *mut *mut GlDataset,
) -> GlStatus {
    guard(|| {
        let out_dataset = out(out_dataset, "out_dataset")?;
        let cov = make_covariance(dim, output_dims, correlation, covariance_seed)?;
        let data = sample_gaussian(&cov, n, sample_seed)?;
        *out_dataset = Box::into_raw(Box::new(GlDataset { data }));
        Ok(())
    })
}

/// # Safety
/// `dataset` is NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gl_dataset_free(dataset: *mut GlDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Row count, 0 for a NULL handle.
///
/// # Safety
/// `dataset` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gl_dataset_len(dataset: *const GlDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.data.len())
}

/// Error term, regularizer and total loss at strength `beta`.
///
/// # Safety
/// Handles are live; the three outputs are writable.
#[no_mangle]
pub unsafe extern "C" fn gl_network_loss(
    network: *const GlNetwork,
    dataset: *const GlDataset,
    beta: f64,
    out_error: *mut f64,
    out_reg: *mut f64,
    out_total: *mut f64,
) -> GlStatus {
    guard(|| {
        let net = handle(network, "network")?;
        let data = handle(dataset, "dataset")?;
        let (e, r, t) = (out(out_error, "out_error")?, out(out_reg, "out_reg")?, out(out_total, "out_total")?);
        let terms = network::loss_total(&net.spec, &net.params, &data.data, beta, None)?;
        (*e, *r, *t) = (terms.error, terms.reg, terms.total);
        Ok(())
    })
}

/// Gradient of the total loss into `out_grad[0..len]`.
///
/// # Safety
/// Handles are live; `out_grad` has `len` writable slots.
#[no_mangle]
pub unsafe extern "C" fn gl_network_gradient(
    network: *const GlNetwork,
    dataset: *const GlDataset,
    beta: f64,
    out_grad: *mut f64,
    len: usize,
) -> GlStatus {
    guard(|| {
        let net = handle(network, "network")?;
        let data = handle(dataset, "dataset")?;
        if len != net.params.len() {
            return Err(fail(
                GlStatus::ShapeMismatch,
                format!("expected {} gradient slots, buffer holds {len}", net.params.len()),
            ));
        }
        let g = network::gradient(&net.spec, &net.params, &data.data, beta, None)?;
        slice_mut(out_grad, len, "out_grad")?.copy_from_slice(g.as_slice());
        Ok(())
    })
}

/// Error-surface geometry at the network's parameters. `cutoff` is the
/// Gauss-Kronecker eigenvalue cutoff.
///
/// # Safety
/// Handles are live; `out_geometry` is writable.
#[no_mangle]
pub unsafe extern "C" fn gl_network_geometry(
    network: *const GlNetwork,
    dataset: *const GlDataset,
    beta: f64,
    cutoff: f64,
    out_geometry: *mut GlGeometry,
) -> GlStatus {
    guard(|| {
        let net = handle(network, "network")?;
        let data = handle(dataset, "dataset")?;
        let dst = out(out_geometry, "out_geometry")?;
        let options = GeometryOptions {
            cutoff,
            ..GeometryOptions::default()
        };
        let s = geometry::geometry_sample(&net.spec, &net.params, &data.data, beta, &options)?;
        *dst = GlGeometry {
            ricci: s.ricci,
            gauss_kronecker: s.gauss_kronecker,
            gk_retained: s.gk_retained,
            mean_curvature: s.mean_curvature,
            grad_norm_f: s.grad_norm_f,
            param_norm: s.param_norm,
            min_hessian_eigenvalue: s.min_hessian_eigenvalue,
            max_hessian_eigenvalue: s.max_hessian_eigenvalue,
        };
        Ok(())
    })
}

/// Closed-form scalar curvature from a `d×d` Hessian and a gradient.
///
/// # Safety
/// `hessian` holds `d·d` values, `grad` `d` values; `out_ricci` is writable.
#[no_mangle]
pub unsafe extern "C" fn gl_ricci_scalar(hessian: *const f64, grad: *const f64, d: usize, out_ricci: *mut f64) -> GlStatus {
    guard(|| {
        let dst = out(out_ricci, "out_ricci")?;
        let h = square(slice(hessian, d * d, "hessian")?, d)?;
        *dst = geometry::ricci_scalar(&h, slice(grad, d, "grad")?)?;
        Ok(())
    })
}

/// Scalar curvature by contracting the Riemann tensor; O(d⁴), d ≤ 50.
///
/// # Safety
/// As for [`gl_ricci_scalar`].
#[no_mangle]
pub unsafe extern "C" fn gl_ricci_scalar_oracle(
    hessian: *const f64,
    grad: *const f64,
    d: usize,
    out_ricci: *mut f64,
) -> GlStatus {
    guard(|| {
        let dst = out(out_ricci, "out_ricci")?;
        let h = square(slice(hessian, d * d, "hessian")?, d)?;
        *dst = geometry::ricci_scalar_oracle(&h, slice(grad, d, "grad")?)?;
        Ok(())
    })
}

/// Gauss-Kronecker curvature over eigenvalues with `|λ| ≥ cutoff`.
///
/// # Safety
/// As for [`gl_ricci_scalar`]; `out_k` and `out_retained` are writable.
#[no_mangle]
pub unsafe extern "C" fn gl_gauss_kronecker(
    hessian: *const f64,
    grad: *const f64,
    d: usize,
    cutoff: f64,
    out_k: *mut f64,
    out_retained: *mut usize,
) -> GlStatus {
    guard(|| {
        let (k_dst, r_dst) = (out(out_k, "out_k")?, out(out_retained, "out_retained")?);
        let h = square(slice(hessian, d * d, "hessian")?, d)?;
        let (k, retained) = geometry::gauss_kronecker(&h, slice(grad, d, "grad")?, cutoff)?;
        (*k_dst, *r_dst) = (k, retained);
        Ok(())
    })
}

/// Mean curvature, the trace of the second fundamental form under the metric.
///
/// # Safety
/// As for [`gl_ricci_scalar`].
#[no_mangle]
pub unsafe extern "C" fn gl_mean_curvature(
    hessian: *const f64,
    grad: *const f64,
    d: usize,
    out_mean: *mut f64,
) -> GlStatus {
    guard(|| {
        let dst = out(out_mean, "out_mean")?;
        let h = square(slice(hessian, d * d, "hessian")?, d)?;
        *dst = geometry::mean_curvature(&h, slice(grad, d, "grad")?)?;
        Ok(())
    })
}

/// Binary segmentation of `series[0..n]`. A negative or NaN `penalty`
/// selects the default. `betas` may be NULL, in which case the reported β is
/// the index. Results go to the first `capacity` slots of the three output
/// arrays; `out_count` always receives the number found, and
/// `GL_STATUS_BUFFER_TOO_SMALL` is returned when it exceeds `capacity`.
///
/// # Safety
/// `series` holds `n` values, `betas` is NULL or holds `n` values, the output
/// arrays have `capacity` writable slots and `out_count` is writable.
#[no_mangle]
pub unsafe extern "C" fn gl_detect_change_points(
    series: *const f64,
    betas: *const f64,
    n: usize,
    penalty: f64,
    min_segment: usize,
    out_indices: *mut usize,
    out_betas: *mut f64,
    out_statistics: *mut f64,
    capacity: usize,
    out_count: *mut usize,
) -> GlStatus {
    guard(|| {
        let count = out(out_count, "out_count")?;
        let s = slice(series, n, "series")?;
        let b = if betas.is_null() { None } else { Some(slice(betas, n, "betas")?) };
        let penalty = if penalty >= 0.0 { penalty } else { default_penalty(s) };
        let report = detect_change_points(s, b, penalty, min_segment)?;
        *count = report.len();
        let idx = slice_mut(out_indices, capacity, "out_indices")?;
        let bet = slice_mut(out_betas, capacity, "out_betas")?;
        let stat = slice_mut(out_statistics, capacity, "out_statistics")?;
        for (i, cp) in report.change_points.iter().take(capacity).enumerate() {
            (idx[i], bet[i], stat[i]) = (cp.index, cp.beta, cp.statistic);
        }
        if report.len() > capacity {
            return Err(fail(
                GlStatus::BufferTooSmall,
                format!("{} change points, capacity {capacity}", report.len()),
            ));
        }
        Ok(())
    })
}
