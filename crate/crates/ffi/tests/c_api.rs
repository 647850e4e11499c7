use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use geomlab_ffi::*;

fn last_error() -> String {
    let p = gl_last_error_message();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Fixture {
    net: *mut GlNetwork,
    data: *mut GlDataset,
}

impl Fixture {
    fn new() -> Self {
        let mut net = ptr::null_mut();
        let mut data = ptr::null_mut();
        let hidden = [4usize];
        unsafe {
            assert_eq!(gl_network_new_regression(2, hidden.as_ptr(), 1, 1, 3, &mut net), GlStatus::Ok);
            assert_eq!(gl_dataset_gaussian(3, 1, 0.9, 1, 40, 2, &mut data), GlStatus::Ok);
        }
        Fixture { net, data }
    }
}

impl Drop for Fixture {
    fn drop(&mut self) {
        unsafe {
            gl_network_free(self.net);
            gl_dataset_free(self.data);
        }
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(gl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn loss_and_gradient_agree_with_finite_differences() {
    let f = Fixture::new();
    let d = unsafe { gl_network_param_count(f.net) };
    // 2·4 + 4 + 4·1 + 1
    assert_eq!(d, 17);
    assert_eq!(unsafe { gl_dataset_len(f.data) }, 40);
    let beta = 0.01;
    let mut grad = vec![0.0; d];
    assert_eq!(unsafe { gl_network_gradient(f.net, f.data, beta, grad.as_mut_ptr(), d) }, GlStatus::Ok);
    let mut params = vec![0.0; d];
    assert_eq!(unsafe { gl_network_get_params(f.net, params.as_mut_ptr(), d) }, GlStatus::Ok);
    let loss_at = |p: &[f64]| {
        let (mut e, mut r, mut t) = (0.0, 0.0, 0.0);
        unsafe {
            assert_eq!(gl_network_set_params(f.net, p.as_ptr(), d), GlStatus::Ok);
            assert_eq!(gl_network_loss(f.net, f.data, beta, &mut e, &mut r, &mut t), GlStatus::Ok);
        }
        assert!((e + beta * r - t).abs() <= 1e-15 * t.abs().max(1.0));
        t
    };
    for i in 0..d {
        let h = 1e-6;
        let mut p = params.clone();
        p[i] += h;
        let up = loss_at(&p);
        p[i] -= 2.0 * h;
        let down = loss_at(&p);
        let fd = (up - down) / (2.0 * h);
        assert!((fd - grad[i]).abs() <= 1e-6 * grad[i].abs().max(1.0), "param {i}: {fd} vs {}", grad[i]);
    }
}

#[test]
fn geometry_of_a_network() {
    let f = Fixture::new();
    let mut g = GlGeometry::default();
    assert_eq!(unsafe { gl_network_geometry(f.net, f.data, 0.0, 1e-10, &mut g) }, GlStatus::Ok);
    assert!(g.ricci.is_finite() && g.mean_curvature.is_finite());
    assert!(g.grad_norm_f >= 1.0);
    assert!(g.gk_retained <= 17);
    assert!(g.min_hessian_eigenvalue <= g.max_hessian_eigenvalue);
}

#[test]
fn curvature_of_the_paraboloid_apex() {
    // l = (x² + y²)/2 at the origin: a unit sphere to second order.
    let h = [1.0, 0.0, 0.0, 1.0];
    let grad = [0.0, 0.0];
    let (mut r, mut oracle, mut mean, mut k, mut kept) = (0.0, 0.0, 0.0, 0.0, 0usize);
    unsafe {
        assert_eq!(gl_ricci_scalar(h.as_ptr(), grad.as_ptr(), 2, &mut r), GlStatus::Ok);
        assert_eq!(gl_ricci_scalar_oracle(h.as_ptr(), grad.as_ptr(), 2, &mut oracle), GlStatus::Ok);
        assert_eq!(gl_mean_curvature(h.as_ptr(), grad.as_ptr(), 2, &mut mean), GlStatus::Ok);
        assert_eq!(gl_gauss_kronecker(h.as_ptr(), grad.as_ptr(), 2, 1e-10, &mut k, &mut kept), GlStatus::Ok);
    }
    assert_eq!(r, 2.0);
    assert!((oracle - 2.0).abs() < 1e-12);
    assert_eq!(mean, 2.0);
    assert_eq!((k, kept), (1.0, 2));
}

#[test]
fn change_points_and_buffer_sizes() {
    let series = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 4.0, 4.0, 4.0];
    let betas: Vec<f64> = (0..9).map(|i| 10f64.powi(i - 4)).collect();
    let mut idx = [0usize; 4];
    let mut b = [0.0; 4];
    let mut stat = [0.0; 4];
    let mut count = 0;
    let status = unsafe {
        gl_detect_change_points(
            series.as_ptr(),
            betas.as_ptr(),
            9,
            0.1,
            2,
            idx.as_mut_ptr(),
            b.as_mut_ptr(),
            stat.as_mut_ptr(),
            4,
            &mut count,
        )
    };
    assert_eq!(status, GlStatus::Ok);
    assert_eq!(count, 2);
    assert_eq!(&idx[..2], &[3, 6]);
    assert_eq!(&b[..2], &[betas[3], betas[6]]);

    // Default penalty: 2·ln(9)·12.5 ≈ 55, below both split gains (450, 150).
    let steep = [0.0, 0.0, 0.0, 10.0, 10.0, 10.0, 20.0, 20.0, 20.0];
    let status = unsafe {
        gl_detect_change_points(
            steep.as_ptr(),
            ptr::null(),
            9,
            -1.0,
            2,
            idx.as_mut_ptr(),
            b.as_mut_ptr(),
            stat.as_mut_ptr(),
            1,
            &mut count,
        )
    };
    assert_eq!(status, GlStatus::BufferTooSmall);
    assert_eq!(count, 2);
    assert_eq!(b[0], 3.0);
    assert!(last_error().contains("capacity 1"));
}

#[test]
fn errors_are_reported_not_raised() {
    let mut r = 0.0;
    let status = unsafe { gl_ricci_scalar(ptr::null(), ptr::null(), 2, &mut r) };
    assert_eq!(status, GlStatus::NullPointer);
    assert!(last_error().contains("hessian"));

    let f = Fixture::new();
    let mut short = [0.0; 3];
    assert_eq!(
        unsafe { gl_network_gradient(f.net, f.data, 0.0, short.as_mut_ptr(), 3) },
        GlStatus::ShapeMismatch
    );

    let mut other = ptr::null_mut();
    let hidden = [3usize];
    unsafe {
        assert_eq!(gl_network_new_classifier(5, hidden.as_ptr(), 1, 3, 0, &mut other), GlStatus::Ok);
    }
    let (mut e, mut reg, mut t) = (0.0, 0.0, 0.0);
    let status = unsafe { gl_network_loss(other, f.data, 0.0, &mut e, &mut reg, &mut t) };
    assert_ne!(status, GlStatus::Ok);
    unsafe { gl_network_free(other) };

    let mut data = ptr::null_mut();
    assert_eq!(
        unsafe { gl_dataset_gaussian(3, 1, 1.5, 1, 10, 1, &mut data) },
        GlStatus::InvalidArgument
    );
    assert!(data.is_null());

    // A success clears the message.
    assert_eq!(unsafe { gl_ricci_scalar([1.0].as_ptr(), [0.0].as_ptr(), 1, &mut r) }, GlStatus::Ok);
    assert!(gl_last_error_message().is_null());
}

#[test]
fn dataset_from_arrays_and_null_handles() {
    let x = [0.0, 1.0, 2.0, 3.0];
    let y = [1.0, 0.0, 0.0, 1.0];
    let mut data = ptr::null_mut();
    unsafe {
        assert_eq!(gl_dataset_new(x.as_ptr(), y.as_ptr(), 2, 2, 2, true, &mut data), GlStatus::Ok);
        assert_eq!(gl_dataset_len(data), 2);
        gl_dataset_free(data);
        assert_eq!(gl_dataset_len(ptr::null()), 0);
        assert_eq!(gl_network_param_count(ptr::null()), 0);
        gl_network_free(ptr::null_mut());
        gl_dataset_free(ptr::null_mut());
    }
}

#[test]
fn checkpoint_round_trip() {
    let f = Fixture::new();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    let d = unsafe { gl_network_param_count(f.net) };
    let mut params = vec![0.0; d];
    unsafe { gl_network_get_params(f.net, params.as_mut_ptr(), d) };
    let spec = geomlab::network::NetworkSpec::regression(2, &[4], 1, geomlab::network::Regularizer::L2);
    geomlab::network::Checkpoint::new(spec, geomlab::network::ParameterVector(params.clone()), 0.5, 3, 10)
        .save(&path)
        .unwrap();
    let c_path = std::ffi::CString::new(path.to_str().unwrap()).unwrap();
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { gl_network_load_checkpoint(c_path.as_ptr(), &mut loaded) }, GlStatus::Ok);
    let mut back = vec![0.0; d];
    assert_eq!(unsafe { gl_network_get_params(loaded, back.as_mut_ptr(), d) }, GlStatus::Ok);
    assert_eq!(back, params);
    unsafe { gl_network_free(loaded) };

    let missing = std::ffi::CString::new(dir.path().join("none.json").to_str().unwrap()).unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { gl_network_load_checkpoint(missing.as_ptr(), &mut none) }, GlStatus::Io);
}

#[test]
fn header_declares_the_api_and_compiles_as_c() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(dir.join("geomlab.h")).unwrap();
    for name in [
        "gl_last_error_message",
        "gl_version",
        "gl_network_new_regression",
        "gl_network_new_classifier",
        "gl_network_load_checkpoint",
        "gl_network_free",
        "gl_network_get_params",
        "gl_network_set_params",
        "gl_dataset_new",
        "gl_dataset_gaussian",
        "gl_dataset_free",
        "gl_network_loss",
        "gl_network_gradient",
        "gl_network_geometry",
        "gl_ricci_scalar",
        "gl_ricci_scalar_oracle",
        "gl_gauss_kronecker",
        "gl_mean_curvature",
        "gl_detect_change_points",
        "GL_STATUS_BUFFER_TOO_SMALL",
        "typedef struct GlNetwork GlNetwork",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
    let Ok(status) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c", "-"])
        .arg(format!("-I{}", dir.display()))
        .stdin(std::process::Stdio::piped())
        .spawn()
        .and_then(|mut child| {
            use std::io::Write;
            child
                .stdin
                .take()
                .unwrap()
                .write_all(b"#include <geomlab.h>\nint main(void) { GlStatus s = GL_STATUS_OK; return (int)s; }\n")?;
            child.wait()
        })
    else {
        eprintln!("no C compiler; skipped the syntax check");
        return;
    };
    assert!(status.success());
}
