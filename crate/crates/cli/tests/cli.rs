use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use ocflow_cli::experiment::{read_report, CURVES_HEADER};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ocflow"))
}

fn sample(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// Copies a shipped config into `dir`, so outputs land in the temp dir.
fn staged(dir: &Path, name: &str, edit: impl Fn(String) -> String) -> PathBuf {
    let text = fs::read_to_string(sample(name)).unwrap();
    let path = dir.join(name);
    fs::write(&path, edit(text)).unwrap();
    path
}

#[test]
fn lq_sample_reaches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = staged(dir.path(), "lq.conf", |t| t);
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_report(&dir.path().join("out/lq/report.json")).unwrap();
    assert_eq!(report.schema_version, 1);
    assert!((report.summary.final_j.unwrap() + 0.25).abs() < 1e-4);
    assert!(report.consistency_error() < 1e-12);
    let curves = fs::read_to_string(dir.path().join("out/lq/curves.csv")).unwrap();
    assert_eq!(curves.lines().next().unwrap(), CURVES_HEADER);
    assert_eq!(curves.lines().count(), 202);
    let traj = fs::read_to_string(dir.path().join("out/lq/trajectory.csv")).unwrap();
    assert!(traj.starts_with("step,t,x0\n"));
}

#[test]
fn so3_sample_reaches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = staged(dir.path(), "so3_geodesic.conf", |t| t);
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_report(&dir.path().join("out/so3_geodesic/report.json")).unwrap();
    assert!((report.summary.final_j.unwrap() + 0.32).abs() < 2e-3);
    assert!(report.records.iter().take(300).all(|r| r.eps_k.is_some()));
    assert!(report.diagnostics.max_orthogonality_residual.unwrap() < 1e-9);
    assert!(!dir.path().join("out/so3_geodesic/trajectory.csv").exists());
}

#[test]
fn identical_runs_write_identical_curves() {
    let dir = tempfile::tempdir().unwrap();
    let edit = |t: String| {
        t.replace("problem.field.variant = zero", "problem.field.variant = feed_forward\nproblem.field.seed = 9")
            .replace("problem.x0 = 0, 0, 0", "problem.x0 = random\noptimizer.seed = 4")
            .replace("optimizer.max_iters = 300", "optimizer.max_iters = 10")
    };
    let cfg = staged(dir.path(), "so3_geodesic.conf", edit);
    let mut curves = Vec::new();
    for _ in 0..2 {
        assert_eq!(bin().arg("run").arg(&cfg).status().unwrap().code(), Some(0));
        curves.push(fs::read(dir.path().join("out/so3_geodesic/curves.csv")).unwrap());
    }
    assert_eq!(curves[0], curves[1]);
}

#[test]
fn zero_iterations_report_only_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = staged(dir.path(), "lq.conf", |t| t.replace("optimizer.max_iters = 200", "optimizer.max_iters = 0"));
    assert_eq!(bin().arg("run").arg(&cfg).status().unwrap().code(), Some(0));
    let report = read_report(&dir.path().join("out/lq/report.json")).unwrap();
    assert_eq!(report.records.len(), 1);
    assert_eq!(report.records[0].iter, 0);
    assert_eq!(report.records[0].running_cost, 0.0);
    assert_eq!(report.records[0].objective, -0.5);
}

#[test]
fn config_errors_exit_with_two_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = staged(dir.path(), "lq.conf", |t| t.replace("optimizer.n_controls = 50", "optimizer.n_controls = 7"));
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("optimizer.n_controls") && err.contains("line 15"), "{err}");

    let cfg = staged(dir.path(), "lq.conf", |t| t + "optimizer.momentum = 0.9\n");
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("optimizer.momentum"));
}

#[test]
fn divergence_exits_with_three_and_keeps_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = staged(dir.path(), "lq.conf", |t| {
        t.replace("problem.field.variant = zero", "problem.field.variant = linear\nproblem.field.matrix = 1e300")
            .replace("problem.x0 = 0", "problem.x0 = 1e300")
    });
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let report = read_report(&dir.path().join("out/lq/report.json")).unwrap();
    assert_eq!(report.status, "failed");
    assert!(report.status_detail.unwrap().contains("diverged"));
}

#[test]
fn verify_geometry_passes_and_unknown_suite_is_a_config_error() {
    let out = bin().args(["verify", "geometry", "--json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let checks = v[0]["checks"].as_array().unwrap();
    assert!(checks.iter().all(|c| c["passed"] == true && c["tolerance"].is_string() && c["observed"].is_number()));
    assert_eq!(bin().args(["verify", "nonsense"]).status().unwrap().code(), Some(2));
}

#[test]
fn sweep_writes_one_directory_per_config() {
    let dir = tempfile::tempdir().unwrap();
    staged(dir.path(), "lq.conf", |t| t);
    staged(dir.path(), "so3_geodesic.conf", |t| t.replace("optimizer.max_iters = 300", "optimizer.max_iters = 5"));
    let out = bin().arg("sweep").arg(dir.path()).args(["--jobs", "2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    for stem in ["lq", "so3_geodesic"] {
        let report = read_report(&dir.path().join("out").join(stem).join("report.json")).unwrap();
        assert!(report.consistency_error() < 1e-12);
    }
}
