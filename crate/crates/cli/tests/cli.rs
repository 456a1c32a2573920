//! End-to-end smoke tests: every subcommand on small configurations, the
//! documented exit codes, and bit-for-bit determinism across process
//! restarts.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_plapmix")
}

fn repo_config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .to_str()
        .unwrap()
        .to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn plapmix")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed: status {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn simulate_is_deterministic_across_processes() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let cfg = repo_config("quick.cfg");
    for out in [&out_a, &out_b] {
        let output = run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_ok(&output, "simulate");
    }
    for file in ["simulate/run.jsonl", "simulate/run.csv", "simulate/l2.svg", "effective.cfg"] {
        let a = std::fs::read(out_a.join(file)).unwrap();
        let b = std::fs::read(out_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs across process restarts");
    }
}

#[test]
fn measure_kappa_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_config("quick.cfg");
    let out = run(&[
        "measure-kappa",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
        "--override",
        "nu.list=1e-2",
    ]);
    assert_ok(&out, "measure-kappa");
    assert!(dir.path().join("kappa/0.01/0.jsonl").exists());
    assert!(dir.path().join("kappa/summary.json").exists());
}

#[test]
fn sweep_emits_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_config("quick.cfg");
    let out = run(&["sweep", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_ok(&out, "sweep");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("log-log slope"), "{stdout}");
    assert!(dir.path().join("sweep/sweep.csv").exists());
    assert!(dir.path().join("sweep/sweep.svg").exists());
}

#[test]
fn mixing_rate_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_config("mixing.cfg");
    let out = run(&[
        "mixing-rate",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
        "--override",
        "grid.n=64",
        "--override",
        "mixing.horizon=4",
        "--override",
        "mixing.samples=17",
    ]);
    assert_ok(&out, "mixing-rate");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("fitted exponential rate"), "{stdout}");
    assert!(dir.path().join("mixing/report.json").exists());
    assert!(dir.path().join("mixing/series.svg").exists());
}

#[test]
fn bounds_reports_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_config("ref.cfg");
    // theory-scale viscosities: full table, exit 0
    let out = run(&[
        "bounds",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
        "--override",
        "grid.n=64",
    ]);
    assert_ok(&out, "bounds");
    assert!(dir.path().join("bounds/bounds.csv").exists());
    // desk-scale viscosities sit above the feasibility boundary: exit 2
    let out = run(&[
        "bounds",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
        "--override",
        "bounds.nu_list=1e-2,1e-3",
    ]);
    assert_eq!(out.status.code(), Some(2), "infeasible thresholds must exit 2");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("inactive"), "{stdout}");
}

#[test]
fn verify_suites() {
    let out = run(&["verify", "--suite", "f-iteration"]);
    assert_ok(&out, "verify f-iteration");
    let out = run(&["verify", "--suite", "identities"]);
    assert_ok(&out, "verify identities");
    let cfg = repo_config("quick.cfg");
    let out = run(&["verify", "--suite", "weyl", "--config", &cfg]);
    assert_ok(&out, "verify weyl");
    let out = run(&["verify", "--suite", "mixing-controls", "--config", &cfg, "--override", "grid.d=2", "--override", "grid.n=32"]);
    assert_ok(&out, "verify mixing-controls");
    let out = run(&[
        "verify", "--suite", "transport-comparison", "--config", &cfg,
        "--override", "grid.d=2", "--override", "grid.n=32",
        "--override", "flow.kind=alternating_shear", "--override", "nu.list=1e-2",
    ]);
    assert_ok(&out, "verify transport-comparison");
    let out = run(&["verify", "--suite", "nonsense"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_errors_exit_1_and_name_the_key() {
    let out = run(&["sweep", "--config", "/nonexistent/path.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    let cfg = repo_config("quick.cfg");
    let out = run(&["sweep", "--config", &cfg, "--override", "grid.resolution=9"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("grid.resolution"), "{stderr}");
    let out = run(&["sweep", "--config", &cfg, "--override", "grid.n=lots"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("grid.n") && stderr.contains("lots"), "{stderr}");
}

#[test]
fn plot_replots_a_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_config("quick.cfg");
    let out = run(&["sweep", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_ok(&out, "sweep for plot");
    let csv = dir.path().join("sweep/sweep.csv");
    let out = run(&[
        "plot",
        csv.to_str().unwrap(),
        "--logx",
        "--logy",
        "--out",
        dir.path().join("replot").to_str().unwrap(),
    ]);
    assert_ok(&out, "plot");
    assert!(dir.path().join("replot/sweep.svg").exists());
}
