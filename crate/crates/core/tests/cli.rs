//! Command-line contract: outputs, manifests and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn phessian(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phessian"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn simulate(dir: &Path, model: &str, n: &str, p: &str, sigma: &str, seed: &str) -> Output {
    phessian(&[
        "simulate", "--model", model, "--n", n, "--p", p, "--sigma", sigma, "--seed", seed, "--out", s(dir),
    ])
}

#[test]
fn simulate_writes_data_truth_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let o = simulate(&out, "2", "30", "8", "0.1", "4");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let text = fs::read_to_string(out.join("data.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "y,x1,x2,x3,x4,x5,x6,x7,x8");
    assert_eq!(text.lines().count(), 31);
    assert_eq!(read_json(&out.join("truth.json")), serde_json::json!([[1, 2], [4, 5]]));

    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["subcommand"], "simulate");
    assert_eq!(manifest["seeds"], serde_json::json!([4]));
    assert_eq!(manifest["parameters"]["model"], 2);
}

#[test]
fn simulate_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&a, "5", "40", "12", "1", "9");
    simulate(&b, "5", "40", "12", "1", "9");
    assert_eq!(fs::read(a.join("data.csv")).unwrap(), fs::read(b.join("data.csv")).unwrap());
}

#[test]
fn noiseless_model_one_response_is_exact_sum() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("m1");
    simulate(&out, "1", "20", "6", "0", "3");
    let mut r = csv::Reader::from_path(out.join("data.csv")).unwrap();
    for rec in r.records() {
        let v: Vec<f64> = rec.unwrap().iter().map(|c| c.parse().unwrap()).collect();
        assert_eq!(v[0], v[1] + v[5]);
    }
}

#[test]
fn simulate_rejects_small_dimension() {
    let tmp = tempfile::tempdir().unwrap();
    let o = simulate(&tmp.path().join("x"), "9", "20", "5", "1", "1");
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("requires p ≥ 10"));
}

#[test]
fn fit_above_max_q_gives_empty_support() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "2", "50", "6", "0.1", "2");
    let out = tmp.path().join("fit");
    let data = sim.join("data.csv");
    let o = phessian(&["fit", "--data", s(&data), "--lambda", "1000", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_json(&out.join("support.json")), serde_json::json!([]));
    let psi = fs::read_to_string(out.join("psi.csv")).unwrap();
    assert_eq!(psi.lines().count(), 6);
    assert!(psi.lines().all(|l| l.split(',').all(|c| c.parse::<f64>().unwrap() == 0.0)));

    let manifest = read_json(&out.join("manifest.json"));
    let digests = manifest["input_digests"].as_object().unwrap();
    assert_eq!(digests.len(), 1);
    assert_eq!(digests.values().next().unwrap().as_str().unwrap().len(), 64);
}

#[test]
fn fit_with_cv_finds_model_two_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "2", "200", "20", "0.1", "5");
    let out = tmp.path().join("fit");
    let data = sim.join("data.csv");
    let o = phessian(&["fit", "--data", s(&data), "--cv", "--seed", "5", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let support = read_json(&out.join("support.json"));
    let pairs: Vec<(u64, u64)> = support
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["i"].as_u64().unwrap(), e["j"].as_u64().unwrap()))
        .collect();
    assert!(pairs.contains(&(1, 2)) && pairs.contains(&(4, 5)), "{pairs:?}");
    assert_eq!(support[0]["name_i"], "x1");
    assert!(out.join("cv.json").exists());
}

#[test]
fn fit_rerun_from_manifest_is_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "3", "80", "10", "0.5", "6");
    let data = sim.join("data.csv");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    phessian(&["fit", "--data", s(&data), "--cv", "--seed", "2", "--folds", "5", "--out", s(&a)]);
    let manifest = read_json(&a.join("manifest.json"));
    let mut args: Vec<String> = manifest["command_line"]
        .as_array()
        .unwrap()
        .iter()
        .skip(1)
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let last = args.len() - 1;
    args[last] = s(&b).to_string();
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(phessian(&args).status.code(), Some(0));
    assert_eq!(fs::read(a.join("psi.csv")).unwrap(), fs::read(b.join("psi.csv")).unwrap());
}

#[test]
fn fit_nonconvergence_exits_two_with_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "2", "50", "8", "0.1", "7");
    let out = tmp.path().join("fit");
    let data = sim.join("data.csv");
    let o = phessian(&["fit", "--data", s(&data), "--lambda", "0.01", "--max-iter", "2", "--tol", "1e-12", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(out.join("psi.csv").exists());
    assert_eq!(read_json(&out.join("manifest.json"))["summary"]["converged"], false);
}

#[test]
fn usage_and_input_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = phessian(&["fit", "--lambda", "0.1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--data"));

    let missing = tmp.path().join("missing.csv");
    let o = phessian(&["fit", "--data", s(&missing), "--lambda", "0.1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "y,x1\n1,2\n3,abc\n").unwrap();
    let o = phessian(&["fit", "--data", s(&bad), "--lambda", "0.1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2"));

    // cross-validation is random and therefore needs a seed
    let o = phessian(&["fit", "--data", s(&bad), "--cv", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));

    assert_eq!(phessian(&["--version"]).status.code(), Some(0));
}

#[test]
fn bench_writes_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = tmp.path().join("grid.json");
    fs::write(&grid, r#"{"n": 60, "models": [2], "settings": [{"rho": 0, "sigma": 0.1}], "dims": [8]}"#).unwrap();
    let out = tmp.path().join("bench");
    let o = phessian(&["bench", "--grid", s(&grid), "--reps", "2", "--seed", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("results.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "Model,rho,sigma,p,n,Method,TPR,FPR,Time,TimeSD,Reps,Failures");
    assert!(lines[1].starts_with("2,0,0.1,8,60,ADMM,"));
    let archive = read_json(&out.join("reps.json"));
    assert_eq!(archive[0]["records"].as_array().unwrap().len(), 2);
}

#[test]
fn bench_rejects_zero_reps_and_bad_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = tmp.path().join("grid.json");
    fs::write(&grid, r#"{"models": [1], "settings": [{"rho": 0, "sigma": 1}], "dims": [10]}"#).unwrap();
    let out = tmp.path().join("bench");
    let o = phessian(&["bench", "--grid", s(&grid), "--reps", "0", "--seed", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));

    fs::write(&grid, "{not json").unwrap();
    let o = phessian(&["bench", "--grid", s(&grid), "--reps", "1", "--seed", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn prescreen_and_oracle_check() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "2", "120", "12", "0.1", "3");
    let data = sim.join("data.csv");

    let ps = tmp.path().join("ps");
    let o = phessian(&["prescreen", "--data", s(&data), "--keep", "4", "--out", s(&ps)]);
    assert_eq!(o.status.code(), Some(0));
    let screen = read_json(&ps.join("screen.json"));
    assert_eq!(screen["kept"].as_array().unwrap().len(), 4);
    assert_eq!(screen["scores"].as_array().unwrap().len(), 12);

    let oc = tmp.path().join("oc");
    let o = phessian(&["oracle-check", "--data", s(&data), "--lambda", "0.2", "--reference", "--out", s(&oc)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let cert = read_json(&oc.join("certificate.json"));
    assert_eq!(cert["kkt"]["passed"], true);
    assert!(cert["reference"]["relative_gap"].as_f64().unwrap() < 1e-4);

    // a supplied all-zero estimate below max|Q| violates the conditions
    let zeros = tmp.path().join("zeros.csv");
    fs::write(&zeros, vec!["0,0,0,0,0,0,0,0,0,0,0,0"; 12].join("\n")).unwrap();
    let oz = tmp.path().join("oz");
    let o = phessian(&["oracle-check", "--data", s(&data), "--lambda", "0.01", "--psi", s(&zeros), "--out", s(&oz)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(read_json(&oz.join("certificate.json"))["kkt"]["passed"], false);
}
