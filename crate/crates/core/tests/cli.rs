//! End-to-end checks of the `ippkit` binary: exit codes, emitted files,
//! and reproducibility under a fixed seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ippkit")
}

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Self {
        let p = std::env::temp_dir().join(format!("ippkit-cli-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&p);
        fs::create_dir_all(&p).unwrap();
        TempDir(p)
    }

    fn path(&self) -> &Path {
        &self.0
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env("IPP_THREADS", "1")
        .output()
        .expect("binary runs")
}

#[test]
fn simulate_writes_trajectory_and_report() {
    let dir = TempDir::new("simulate");
    let out = dir.path().to_str().unwrap();
    let r = run(&["simulate", "--deterministic", "--out", out, "--step", "0.05"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.lines().next().unwrap().starts_with("tau,"));
    assert!(traj.lines().count() > 10);
    let report = fs::read_to_string(dir.path().join("report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["command"], "simulate");
    assert!(v["scenario_digest"].as_str().unwrap().len() >= 8);
}

#[test]
fn simulate_is_reproducible_for_a_fixed_seed() {
    let a = TempDir::new("repro-a");
    let b = TempDir::new("repro-b");
    for d in [&a, &b] {
        let r = run(&[
            "simulate",
            "--seed",
            "77",
            "--step",
            "0.05",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert!(r.status.success());
    }
    let ta = fs::read(a.path().join("trajectory.csv")).unwrap();
    let tb = fs::read(b.path().join("trajectory.csv")).unwrap();
    assert_eq!(ta, tb);
}

#[test]
fn montecarlo_scatter_marker_count_matches_runs() {
    let dir = TempDir::new("mc");
    let out = dir.path().to_str().unwrap();
    let r = run(&[
        "montecarlo",
        "--runs",
        "40",
        "--seed",
        "5",
        "--out",
        out,
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let impacts = fs::read_to_string(dir.path().join("impacts.csv")).unwrap();
    assert_eq!(impacts.lines().count(), 41); // header + one row per landed run
    let svg = fs::read_to_string(dir.path().join("scatter.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="marker""#).count(), 40);
    assert_eq!(svg.matches(r#"class="ellipse""#).count(), 1);
}

#[test]
fn bad_scenario_path_is_a_usage_error_with_no_partial_output() {
    let dir = TempDir::new("badpath");
    let out = dir.path().to_str().unwrap();
    let r = run(&[
        "montecarlo",
        "--scenario",
        "/nonexistent/scenario.json",
        "--out",
        out,
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("cannot read scenario"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn invalid_scenario_json_is_rejected() {
    let dir = TempDir::new("badjson");
    let sc = dir.path().join("broken.json");
    fs::write(&sc, "{ \"projectile\": {} }").unwrap();
    let r = run(&[
        "simulate",
        "--scenario",
        sc.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(dir.path().join("trajectory.csv").try_exists().map(|e| !e).unwrap());
}

#[test]
fn too_few_runs_is_a_usage_error() {
    let dir = TempDir::new("fewruns");
    let r = run(&[
        "montecarlo",
        "--runs",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn invalid_step_override_is_rejected() {
    let dir = TempDir::new("badstep");
    let r = run(&[
        "simulate",
        "--step",
        "-0.01",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn moments_emits_series_and_prediction() {
    let dir = TempDir::new("moments");
    let out = dir.path().to_str().unwrap();
    let r = run(&["moments", "--random-ic", "--out", out]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = fs::read_to_string(dir.path().join("moments.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("tau,"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    let pred = &report["moment_prediction"];
    assert!(pred["sd_x"].as_f64().unwrap() > 0.0);
    assert!(pred["mean_x"].as_f64().unwrap() > 0.0);
}

#[test]
fn compare_reports_both_engines() {
    let dir = TempDir::new("compare");
    let out = dir.path().to_str().unwrap();
    let r = run(&[
        "compare",
        "--runs",
        "60",
        "--random-ic",
        "--out",
        out,
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["impacts.csv", "moments.csv", "compare.svg", "report.json"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert!(report["impact_stats"]["sd_x"].as_f64().unwrap() > 0.0);
    assert!(report["moment_prediction"]["sd_x"].as_f64().unwrap() > 0.0);
}

#[test]
fn control_study_emits_paired_outputs() {
    let dir = TempDir::new("control");
    let out = dir.path().to_str().unwrap();
    let r = run(&[
        "control",
        "--scenario",
        "guided",
        "--runs",
        "20",
        "--seed",
        "11",
        "--out",
        out,
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for f in [
        "controlled_impacts.csv",
        "uncontrolled_impacts.csv",
        "control_log.csv",
        "control.svg",
        "report.json",
    ] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert!(report["trace_ratio"].as_f64().unwrap() > 0.0);
    let log = fs::read_to_string(dir.path().join("control_log.csv")).unwrap();
    assert!(log.lines().next().unwrap().starts_with("tau,e1,e2,e3"));
}
