use std::path::Path;
use std::process::{Command, Output};

use langford::manifest::{read_manifest, verify_digests};

fn langford(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_langford"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("LANGFORD_WORKERS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn equilibria_sweep_writes_a_verifiable_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = langford(dir.path(), &["equilibria", "--sweep", "0.9:0.96:0.001"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_manifest(dir.path()).unwrap();
    assert_eq!(m.outcome, "ok");
    assert!(!m.outputs.is_empty());
    let fold = m.scalars["fold_alpha"].as_f64().unwrap();
    assert!((fold - 0.9321697517861).abs() < 1e-10);
    assert!(verify_digests(dir.path()).unwrap().is_empty());

    let v = Command::new(env!("CARGO_BIN_EXE_langford"))
        .args(["verify"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&v), 0);
    let first = dir.path().join(&m.outputs[0].path);
    std::fs::write(first, "tampered").unwrap();
    let v = Command::new(env!("CARGO_BIN_EXE_langford"))
        .args(["verify"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_ne!(code(&v), 0);
}

#[test]
fn bad_configuration_is_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&langford(dir.path(), &["--set", "model.nope=1", "equilibria"])), 2);
    assert_eq!(code(&langford(dir.path(), &["--set", "integrator.tol=-1", "equilibria"])), 2);
    assert_eq!(code(&langford(dir.path(), &["equilibria", "--sweep", "1:0"])), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_langford"))
        .arg("--out")
        .arg(dir.path())
        .arg("equilibria")
        .env("LANGFORD_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn config_file_layers_under_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "[model]\nalpha = 0.5\n").unwrap();
    let out = dir.path().join("run");
    let o = langford(&out, &["--config", cfg.to_str().unwrap(), "--set", "model.alpha=1.1", "equilibria"]);
    assert_eq!(code(&o), 0);
    let m = read_manifest(&out).unwrap();
    assert!(m.config.contains("alpha = 1.1"), "{}", m.config);
}

#[test]
fn chart_then_atlas() {
    let dir = tempfile::tempdir().unwrap();
    let charts = dir.path().join("chart");
    let o = langford(&charts, &["chart", "p0", "unstable", "--alpha", "0", "--N", "12"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let file = charts.join("chart_p0_unstable.txt");
    assert!(file.exists());
    let mesh = dir.path().join("atlas");
    let o = langford(&mesh, &["atlas", file.to_str().unwrap(), "--n-gen", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(mesh.join("gen_003.obj").exists());
    assert!(verify_digests(&mesh).unwrap().is_empty());

    let o = langford(&charts, &["chart", "p0", "stable", "--alpha", "0"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn empty_heteroclinic_scan_is_a_negative_result() {
    let dir = tempfile::tempdir().unwrap();
    let o = langford(dir.path(), &["hetero", "--alpha", "0.95", "scan"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_manifest(dir.path()).unwrap().outcome, "negative");
}
