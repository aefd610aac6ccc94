use std::fs;
use std::path::Path;

use cmc::bench::{MetricRecord, DESK_LAMBDA_C};
use cmc::cli::run;
use cmc::error::exit;
use cmc::io::{self, FitReport, LayoutFile};
use cmc_core::data::BlockLayout;
use cmc_core::solver::{lambda_heuristic, theory_bound, BoundKind, BoundParams, Termination};

fn cmc(args: &[&str]) -> u8 {
    run(std::iter::once("cmc").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_writes_round_tripping_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(cmc(&["generate", "--seed", "5", "--p", "0.3", "--out", s(&a)]), exit::OK);
    assert_eq!(cmc(&["generate", "--seed", "5", "--p", "0.3", "--out", s(&b)]), exit::OK);
    for f in [io::OBSERVATIONS_FILE, io::LAYOUT_FILE, "truth.bin", "truth.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let sidecar: LayoutFile = io::read_json(&a.join(io::LAYOUT_FILE)).unwrap();
    assert_eq!(sidecar.layout().unwrap(), BlockLayout::new(300, vec![100; 3]).unwrap());
    let truth = io::load_truth(&a, &sidecar.layout().unwrap()).unwrap();
    assert!((truth.sup_norm() - 1.0).abs() < 1e-12);

    let c = dir.path().join("c");
    assert_eq!(cmc(&["generate", "--seed", "6", "--p", "0.3", "--out", s(&c)]), exit::OK);
    assert_ne!(fs::read(a.join(io::OBSERVATIONS_FILE)).unwrap(), fs::read(c.join(io::OBSERVATIONS_FILE)).unwrap());
}

#[test]
fn full_probability_observes_every_entry() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cmc(&["generate", "--seed", "1", "--p", "1", "--out", s(dir.path())]), exit::OK);
    let text = fs::read_to_string(dir.path().join(io::OBSERVATIONS_FILE)).unwrap();
    assert_eq!(text.lines().count() - 1, 300 * 300);
}

#[test]
fn generate_requires_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cmc(&["generate", "--out", s(dir.path())]), exit::CONFIG);
}

#[test]
fn fit_end_to_end_with_auto_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let (data, out) = (dir.path().join("data"), dir.path().join("fit"));
    assert_eq!(cmc(&["generate", "--seed", "3", "--p", "0.6", "--out", s(&data)]), exit::OK);
    assert_eq!(cmc(&["fit", "--input", s(&data), "--out", s(&out), "--lambda", "auto"]), exit::OK);
    let report = io::load_fit(&out).unwrap();
    assert_eq!(report.result.terminated_by, Termination::Tolerance);
    assert!(!report.result.rank_history.is_empty());
    assert_eq!(report.result.rank(), report.result.factors.rank());
    let obs = io::load_observations(&data).unwrap();
    assert_eq!(report.result.lambda, lambda_heuristic(&obs, DESK_LAMBDA_C));
}

#[test]
fn fit_reports_max_iters_with_its_own_code() {
    let dir = tempfile::tempdir().unwrap();
    let (data, out) = (dir.path().join("data"), dir.path().join("fit"));
    assert_eq!(cmc(&["generate", "--seed", "3", "--p", "0.5", "--out", s(&data)]), exit::OK);
    assert_eq!(cmc(&["fit", "--input", s(&data), "--out", s(&out), "--max-iters", "2"]), exit::MAX_ITERS);
    let report: FitReport = io::read_json(&out.join(io::FIT_FILE)).unwrap();
    assert_eq!(report.result.terminated_by, Termination::MaxIters);
    assert_eq!(report.config.max_iters, 2);
}

#[test]
fn fit_is_byte_reproducible_without_timing() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(cmc(&["generate", "--seed", "8", "--p", "0.4", "--out", s(&data)]), exit::OK);
    for k in 0..2 {
        let out = dir.path().join(format!("fit{k}"));
        assert_eq!(cmc(&["fit", "--input", s(&data), "--out", s(&out), "--no-timing", "--seed", "4"]), exit::OK);
    }
    for f in [io::FIT_FILE, io::FACTORS_FILE, "u.bin", "sigma.bin", "v.bin"] {
        let a = fs::read(dir.path().join("fit0").join(f)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("fit1").join(f)).unwrap(), "{f}");
    }
}

fn write_data(dir: &Path, csv: &str) {
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join(io::OBSERVATIONS_FILE), csv).unwrap();
    let layout = r#"{"d_u": 3, "d_vs": [2, 2], "families": [{"family": "gaussian", "nuisance": 1.0}, {"family": "poisson"}]}"#;
    fs::write(dir.join(io::LAYOUT_FILE), layout).unwrap();
}

#[test]
fn empty_observations_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let (data, out) = (dir.path().join("data"), dir.path().join("fit"));
    write_data(&data, "v,i,j,y\n");
    assert_eq!(cmc(&["fit", "--input", s(&data), "--out", s(&out)]), exit::DATA);
    assert!(!out.exists());
}

#[test]
fn malformed_rows_are_reported_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_data(&data, "v,i,j,y\n0,0,0,1.0\n1,2,1,2\n0,1,x,0.5\n");
    let err = io::load_observations(&data).unwrap_err();
    assert!(matches!(err, cmc::Error::Parse { line: 4, .. }), "{err}");
    assert_eq!(err.exit_code(), exit::DATA);
    let out = dir.path().join("fit");
    assert_eq!(cmc(&["fit", "--input", s(&data), "--out", s(&out)]), exit::DATA);
    assert!(!out.exists());
}

#[test]
fn family_domain_mismatch_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    // Gaussian and Poisson sources; a negative Poisson count has no likelihood.
    write_data(&data, "v,i,j,y\n0,0,0,1.0\n1,0,0,-3\n1,2,1,2\n");
    let err = io::load_observations(&data).unwrap_err();
    assert!(matches!(err, cmc::Error::Parse { line: 3, .. }), "{err}");
    let out = dir.path().join("fit");
    assert_eq!(cmc(&["fit", "--input", s(&data), "--out", s(&out)]), exit::DATA);
    assert!(!out.exists());
}

#[test]
fn missing_input_is_a_config_error() {
    assert_eq!(cmc(&["fit", "--input", "/nonexistent/cmc-input", "--out", "/tmp/x"]), exit::CONFIG);
}

#[test]
fn experiment_with_an_empty_grid_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cmc(&["experiment", "--seed", "1", "--p", "", "--out", s(dir.path())]), exit::CONFIG);
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
}

fn small_experiment_config(dir: &Path) -> std::path::PathBuf {
    let cfg = r#"{
        "experiment": {
            "id": "small",
            "synthetic": {
                "d_u": 40, "d_vs": [20, 20], "ranks": [2, 2],
                "laws": [{"law": "normal", "mean": 0.5, "std": 1.0}, {"law": "bernoulli", "p": 0.5}],
                "gamma": 1.0, "shared_rows": true, "seed": 0
            },
            "observation": {"kind": "exact"},
            "p_grid": [0.5],
            "trials": 10,
            "seed": 0,
            "solver": {"lambda": {"kind": "auto", "c": 0.01}, "initial_rank": 10},
            "cold_start": {"target": 1, "fraction": 0.2}
        },
        "jobs": 2
    }"#;
    let path = dir.join("run.json");
    fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn coldstart_emits_paired_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_experiment_config(dir.path());
    let out = dir.path().join("cold");
    assert_eq!(cmc(&["coldstart", "--config", s(&cfg), "--seed", "2", "--out", s(&out)]), exit::OK);
    let records: Vec<MetricRecord> = io::read_jsonl(&out.join("coldstart.jsonl")).unwrap();
    assert_eq!(records.len(), 20);
    assert!(records.iter().all(|r| r.error.is_none() && r.relative_error.is_some()));
    assert!(out.join("coldstart_summary.json").exists());
}

#[test]
fn experiment_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_experiment_config(dir.path());
    let args = |out: &Path| {
        cmc(&[
            "experiment", "--config", s(&cfg), "--seed", "9", "--p", "0.3,0.5,0.7,0.9", "--trials", "2",
            "--no-timing", "--out", s(out),
        ])
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(args(&a), exit::OK);
    assert_eq!(args(&b), exit::OK);
    for f in ["metrics.jsonl", "metrics_traces.jsonl", "summary.json", "curve_collective.csv", "curve_per_source.csv", "rate.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let records: Vec<MetricRecord> = io::read_jsonl(&a.join("metrics.jsonl")).unwrap();
    assert_eq!(records.len(), 4 * 2 * 2);
    let curve = fs::read_to_string(a.join("curve_collective.csv")).unwrap();
    assert!(curve.starts_with("p,mean_re,std_re,bound\n"));
    assert_eq!(curve.lines().count(), 5);
}

#[test]
fn bounds_reproduce_the_theory_spot_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"bound": {"kind": "expfam", "params": {
        "rank": 5.0, "p": 0.5, "d_u": 300.0, "d": 300.0, "mu": 600.0, "gamma": 1.0,
        "l2": 1.0, "u2": 1.0, "kappa": 1.0, "rho": 1.0, "varsigma": 1.0, "c": 1.0}}}"#;
    let path = dir.path().join("bounds.json");
    fs::write(&path, cfg).unwrap();
    let out = dir.path().join("out");
    assert_eq!(cmc(&["bounds", "--config", s(&path), "--out", s(&out)]), exit::OK);
    let lines: Vec<serde_json::Value> = io::read_jsonl(&out.join("bounds.jsonl")).unwrap();
    let value = lines[0]["bound"].as_f64().unwrap();
    let hand = 5.0 / (0.25 * 90000.0) * 2.0 * (600.0 + 300f64.ln().powi(3));
    assert!((value - hand).abs() < 1e-12);
    assert!((value - 0.349_14).abs() < 1e-5);
    let params = BoundParams { rank: 5.0, p: 0.5, d_u: 300.0, d: 300.0, mu: 600.0, ..BoundParams::default() };
    assert_eq!(value, theory_bound(BoundKind::Expfam, &params).unwrap());
}
