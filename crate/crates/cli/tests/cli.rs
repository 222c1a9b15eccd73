use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hardsphere"));
    c.env_remove("HARDSPHERE_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn bounds_scan_reports_min_dimension() {
    let out = run(&["bounds-scan", "--d-min", "11", "--d-max", "60", "--threshold", "0.892"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["min_dimension"], 45);
    assert_eq!(doc["rows"].as_array().unwrap().len(), 50);
    assert!(String::from_utf8_lossy(&out.stderr).contains("min dimension for threshold 0.892: 45"));
}

#[test]
fn bounds_scan_rows_30_and_31() {
    let out = run(&["bounds-scan", "--d-min", "30", "--d-max", "31", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "30");
    assert_eq!(rows[0][4], "");
    assert_eq!(rows[1][0], "31");
    assert!(rows[1][4].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn bounds_scan_ignores_seed() {
    let a = run(&["bounds-scan", "--seed", "1"]).stdout;
    let b = run(&["bounds-scan", "--seed", "99"]).stdout;
    assert_eq!(a, b);
}

#[test]
fn bad_range_is_usage_error() {
    assert_eq!(run(&["bounds-scan", "--d-min", "10"]).status.code(), Some(2));
    assert_eq!(run(&["bounds-scan", "--d-min", "50", "--d-max", "40"]).status.code(), Some(2));
    assert_eq!(run(&["bounds-scan", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--suite", "nope"]).status.code(), Some(2));
}

#[test]
fn simulate_d5_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = run(&[
        "simulate", "--dim", "5", "--lambda", "5", "--seed", "1", "--lattice-radius", "12", "--cells-C", "2",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&out_dir);
    assert_eq!(m["seed"], 1);
    assert_eq!(m["seed_source"], "flag");
    assert_eq!(m["rng_algorithm"], hardsphere::rng::RNG_ALGORITHM);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert!(m["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert!(m["results"]["layers"][0]["stop"].is_string());
    assert_eq!(m["results"]["hard_sphere"]["violations"].as_array().unwrap().len(), 0);
    assert!(out_dir.join("spheres.txt").exists());
    let steps = std::fs::read_to_string(out_dir.join("steps.csv")).unwrap();
    assert!(steps.starts_with(hardsphere::construction::STEP_CSV_HEADER));
}

fn simulate_d45(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "simulate", "--dim", "45", "--cells-C", "16", "--lattice-radius", "16", "--max-steps", "150", "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn simulate_replays_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(simulate_d45(&a, &["--layers", "2"]).status.code(), Some(0));
    let out = bin()
        .env("HARDSPHERE_SEED", "1")
        .args(["simulate", "--dim", "45", "--cells-C", "16", "--lattice-radius", "16", "--max-steps", "150"])
        .args(["--layers", "2", "--out", b.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    for f in ["spheres.txt", "steps.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(manifest(&b)["seed_source"], "env:HARDSPHERE_SEED");
    let m = manifest(&a);
    assert_eq!(m["seed_source"], "default");
    assert!(m["results"]["constructed"].as_u64().unwrap() > 1);
}

#[test]
fn simulate_with_eta_annotates_leftovers() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate_d45(dir.path(), &["--eta", "0.05"]);
    assert_eq!(out.status.code(), Some(0));
    let r = &manifest(dir.path())["results"];
    assert!(r["unresolved_leftovers"].as_u64().unwrap() <= r["leftovers"].as_u64().unwrap());
    let dump = std::fs::read_to_string(dir.path().join("spheres.txt")).unwrap();
    let positive = dump
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(' ').collect::<Vec<_>>())
        .filter(|f| f[2] == "leftover" && f[3].parse::<f64>().unwrap() > 0.0)
        .count() as u64;
    let resolved = r["leftovers"].as_u64().unwrap() - r["unresolved_leftovers"].as_u64().unwrap();
    assert_eq!(positive, resolved);
}

#[test]
fn simulate_usage_errors() {
    assert_eq!(run(&["simulate", "--dim", "45"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    // auto intensity needs A/B > 1
    assert_eq!(run(&["simulate", "--dim", "20", "--cells-C", "2", "--out", d]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--dim", "2", "--lambda", "1", "--out", d]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--dim", "5", "--lambda", "-1", "--cells-C", "2", "--out", d]).status.code(), Some(2));
}

#[test]
fn perc2d_extremes() {
    let out = run(&["perc2d", "--p", "1", "--radius", "20", "--trials", "20"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["theta_hat"], 1.0);
    let out = run(&["perc2d", "--p", "0.5", "--radius", "60", "--trials", "200"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["theta_hat"].as_f64().unwrap() < 0.02);
    assert_eq!(run(&["perc2d", "--p", "1.5"]).status.code(), Some(2));
}

#[test]
fn perc2d_above_threshold() {
    let out = run(&["perc2d", "--p", "0.795664", "--radius", "100", "--trials", "1000", "--seed", "5"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let (t, se) = (v["theta_hat"].as_f64().unwrap(), v["std_error"].as_f64().unwrap());
    assert!(t - 4.0 * se > 0.0);
}

#[test]
fn verify_sampler_and_isolation_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--suite", "sampler", "--budget", "3000", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("verify.json").exists());
    assert_eq!(manifest(dir.path())["results"]["failed_checks"], 0);
    let out = run(&["verify", "--suite", "isolation", "--budget", "20000", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("suite,check,value"));
}
