use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
task = "gauss1d"
seed = 3

[network]
hidden = [3]

[optimizer]
kind = "adam"
learning_rate = 0.02
epochs = 60

[data]
n_train = 60
n_test = 40

[sweep]
beta_min = 1e-3
beta_max = 1.0
n_points = 6
annealing = true
anneal_epochs = 30
seeds = [1, 2]
"#;

fn geomlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geomlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn sweep_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("out");
    let o = geomlab(&["sweep", "--config", s(&cfg), "--out", s(&out), "--workers", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    // One progress line per point.
    assert_eq!(stderr(&o).matches("beta=").count(), 12);

    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "beta,seed,epochs_run,error,total,accuracy,param_norm,grad_norm,ricci,gauss_kronecker,gk_retained,mean_curvature,min_hess_eig,max_hess_eig,diverged,curvature_skipped"
    );
    assert_eq!(lines.count(), 12);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("transitions.json")).unwrap()).unwrap();
    assert!(report["change_points"].is_array());
    for seed in [1, 2] {
        assert!(out.join(format!("transitions_seed{seed}.json")).exists());
        assert!(out.join(format!("checkpoints/seed{seed}/beta005.json")).exists());
    }
    assert!(out.join("reg_terms.csv").exists());
    for plot in ["error", "param_norm", "ricci"] {
        let svg = fs::read_to_string(out.join(format!("plots/{plot}.svg"))).unwrap();
        assert!(svg.starts_with("<?xml"));
    }
    let resolved = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(resolved.contains("task = \"gauss1d\""));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = geomlab(&["sweep", "--config", s(&cfg), "--out", s(out), "--no-curvature"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["sweep.csv", "reg_terms.csv", "transitions.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",,,,,,,false,true"));
}

#[test]
fn analyze_plot_and_curvature_on_sweep_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("out");
    assert!(geomlab(&["sweep", "--config", s(&cfg), "--out", s(&out), "--no-curvature"]).status.success());
    let csv = out.join("sweep.csv");

    let o = geomlab(&["analyze", "--input", s(&csv), "--column", "param_norm"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["change_points"].is_array());

    let analysis = dir.path().join("analysis");
    let o = geomlab(&["analyze", "--input", s(&csv), "--column", "error", "--out", s(&analysis)]);
    assert!(o.status.success());
    assert!(analysis.join("transitions_error.json").exists());

    let o = geomlab(&["plot", "--input", s(&csv), "--column", "param_norm", "--out", s(&analysis)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(analysis.join("param_norm.svg")).unwrap().contains("<polyline"));

    let ckpt = out.join("checkpoints/seed1/beta000.json");
    let o = geomlab(&["curvature", "--input", s(&ckpt), "--config", s(&cfg), "--out", s(&analysis)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let g: serde_json::Value = serde_json::from_str(&fs::read_to_string(analysis.join("geometry.json")).unwrap()).unwrap();
    assert!(g["ricci"].is_number());

    let o = geomlab(&["analyze", "--input", s(&csv), "--column", "no_such_column"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_data_writes_splits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("data");
    let o = geomlab(&["gen-data", "--config", s(&cfg), "--out", s(&out), "--seed", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let train = fs::read_to_string(out.join("train.csv")).unwrap();
    assert_eq!(train.lines().count(), 61);
    assert_eq!(fs::read_to_string(out.join("test.csv")).unwrap().lines().count(), 41);
    let cov: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("covariance.json")).unwrap()).unwrap();
    assert_eq!(cov["dim"], 3);
}

#[test]
fn config_errors_exit_one_and_list_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SMALL.replace("n_points = 6", "n_points = 6\ncolour = \"blue\"").replace("n_train = 60", "n_train = 0");
    let cfg = write_config(dir.path(), "bad.toml", &bad);
    let o = geomlab(&["sweep", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sweep.colour"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "bad2.toml", &SMALL.replace("n_train = 60", "n_train = 0"));
    let o = geomlab(&["sweep", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n_train"));

    assert_eq!(geomlab(&["sweep"]).status.code(), Some(1));
    assert_eq!(geomlab(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(geomlab(&["sweep", "--config", "/nonexistent.toml"]).status.code(), Some(1));
    assert_eq!(geomlab(&["--help"]).status.code(), Some(0));

    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let o = geomlab(&["vae-sweep", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("vae"));
    let o = geomlab(&["sweep", "--config", s(&cfg), "--out", s(dir.path()), "--workers", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let mnist = "task = \"mnist\"\n[data]\nmnist_dir = \"missing\"\n[sweep]\nn_points = 4\n";
    let cfg = write_config(dir.path(), "mnist.toml", mnist);
    let o = geomlab(&["mnist-sweep", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train-images-idx3-ubyte"), "{}", stderr(&o));
}

#[test]
fn hysteresis_without_two_transitions_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}penalty = 1e9\n[hysteresis]\nbeta = 1e-3\nepochs = 20\n");
    let cfg = write_config(dir.path(), "hyst.toml", &text);
    let out = dir.path().join("out");
    let o = geomlab(&["hysteresis", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("hysteresis.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 2);
    assert!(summary[0]["error"].as_str().unwrap().contains("needs two"));
}
