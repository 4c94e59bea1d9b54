use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use riskctl_core::oracles::harmonic_number;
use serde_json::Value;

fn models() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn model(name: &str) -> String {
    models().join(name).to_string_lossy().into_owned()
}

fn riskctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskctl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_model(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SINGLE_STATE: &str = r#"{"states":[{"label":"a","r":0}],"actions":["u"],
"kernel":{"u":[[1.0]]},"cost":[[0.7]]}"#;

#[test]
fn validate_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = riskctl(&[
        "validate",
        "--model",
        &model("harmonic_n4.json"),
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&dir.path().join("validation.json"));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["c_lower"], 0.0);
    assert!((v["c_bar"].as_f64().unwrap() - 0.8).abs() < 1e-15);
}

#[test]
fn row_sum_violation_exits_two_and_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_model(
        dir.path(),
        "bad.json",
        r#"{"states":[{"label":"a","r":0},{"label":"b","r":1}],"actions":["u"],
        "kernel":{"u":[[0.5,0.5],[0.5,0.4]]},"cost":[[0],[1]]}"#,
    );
    let o = riskctl(&[
        "validate",
        "--model",
        &bad,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("\"b\"") || err.contains(" b"), "{err}");
    assert!(!dir.path().join("validation.json").exists());
}

#[test]
fn missing_model_exits_one() {
    let o = riskctl(&["validate", "--model", "/nonexistent/model.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn solve_harmonic_prints_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let o = riskctl(&[
        "solve",
        "--model",
        &model("harmonic_n4.json"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("lambda = 0.5433333"), "{}", stdout(&o));
    let p = json(&dir.path().join("policy.json"));
    assert_eq!(p["actions"].as_array().unwrap().len(), 5);
    let csv = std::fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    assert!(csv.starts_with("state,w,action\n"));
}

#[test]
fn solve_single_state_gives_its_cost_in_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_model(dir.path(), "one.json", SINGLE_STATE);
    let mut answers = Vec::new();
    for mode in ["max", "min"] {
        let out = dir.path().join(mode);
        let o = riskctl(&[
            "solve",
            "--model",
            &m,
            "--mode",
            mode,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        let s = json(&out.join("solution.json"));
        assert!((s["lambda"].as_f64().unwrap() - 0.7).abs() < 1e-12);
        answers.push((s["lambda"].clone(), s["w"].clone()));
    }
    assert_eq!(answers[0], answers[1]);
}

#[test]
fn solve_on_a_ball_includes_the_exterior_state() {
    let dir = tempfile::tempdir().unwrap();
    let o = riskctl(&[
        "solve",
        "--model",
        &model("dominance.json"),
        "--n",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let s = json(&dir.path().join("solution.json"));
    assert_eq!(s["n"], 2);
    assert_eq!(
        s["states"].as_array().unwrap().last().unwrap(),
        "__exterior__"
    );
}

#[test]
fn exhausted_iterations_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = riskctl(&[
        "solve",
        "--model",
        &model("harmonic_n4.json"),
        "--max-iters",
        "3",
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!dir.path().join("solution.json").exists());
}

#[test]
fn harmonic_sweep_matches_closed_form_and_flags_degeneracy() {
    let dir = tempfile::tempdir().unwrap();
    let o = riskctl(&[
        "sweep",
        "--model",
        &model("harmonic_chain.json"),
        "--n-from",
        "4",
        "--n-to",
        "50",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("n,lambda,cw_width,residual,sup_diff,a4_floor")
    );
    let mut rows = 0;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let n: usize = cols[0].parse().unwrap();
        let lambda: f64 = cols[1].parse().unwrap();
        let want = 1.0 - harmonic_number(n + 1) / (n + 1) as f64;
        assert!((lambda - want).abs() < 1e-8, "n = {n}");
        rows += 1;
    }
    assert_eq!(rows, 47);
    let report = json(&dir.path().join("sweep.json"));
    assert_eq!(report["degeneracy_flag"], true);
    assert_eq!(report["schema_version"], 1);
}

#[test]
fn compact_sweep_has_constant_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let o = riskctl(&[
        "sweep",
        "--model",
        &model("peaked_line.json"),
        "--n-from",
        "5",
        "--n-to",
        "8",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&dir.path().join("sweep.json"));
    let l: Vec<f64> = r["lambdas"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(l.iter().all(|x| (x - l[0]).abs() < 2e-10));
    assert_eq!(r["degeneracy_flag"], false);
}

#[test]
fn sweep_without_range_is_a_config_error() {
    let o = riskctl(&["sweep", "--model", &model("peaked_line.json")]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn simulate_is_reproducible_byte_for_byte() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = riskctl(&[
            "simulate",
            "--model",
            &model("two_state.json"),
            "--m",
            "200",
            "--paths",
            "2000",
            "--seed",
            "17",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["simulation.json", "simulation.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
}

#[test]
fn simulate_deterministic_model() {
    let dir = tempfile::tempdir().unwrap();
    let o = riskctl(&[
        "simulate",
        "--model",
        &model("harmonic_n4.json"),
        "--m",
        "500",
        "--paths",
        "5",
        "--x0",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let s = json(&dir.path().join("simulation.json"));
    assert_eq!(s["std_error_log"], 0.0);
    assert!((s["estimate"].as_f64().unwrap() - 0.5433333).abs() < 0.01);
    assert!(s["rng"].as_str().unwrap().contains("ChaCha8"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"model": {:?}, "m": 10, "paths": 50, "seed": 3, "out": {:?}}}"#,
            model("two_state.json"),
            dir.path().join("from_config")
        ),
    )
    .unwrap();
    let flagged = dir.path().join("from_flags");
    let o = riskctl(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--m",
        "20",
        "--out",
        flagged.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let s = json(&flagged.join("simulation.json"));
    assert_eq!(s["horizon"], 20);
    assert_eq!(s["paths"], 50);
    assert!(!dir.path().join("from_config").exists());
}

#[test]
fn unknown_config_key_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"modle": "x.json"}"#).unwrap();
    let o = riskctl(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn explicit_policy_and_unknown_action() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let m = model("dominance.json");
    let all_jump = ["jump"; 8].join(",");
    let o = riskctl(&[
        "simulate", "--model", &m, "--m", "10", "--paths", "10", "--policy", &all_jump, "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(0));
    let s = json(&dir.path().join("simulation.json"));
    assert!(s["lambda_solved"].is_null());
    let bad = ["leap"; 8].join(",");
    let o = riskctl(&[
        "simulate", "--model", &m, "--m", "10", "--paths", "10", "--policy", &bad, "--out", out,
    ]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn exit_diagnostic_outputs_and_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = riskctl(&[
        "diagnose-exass",
        "--model",
        &model("two_state.json"),
        "--reference-radius",
        "5",
        "--horizons",
        "10,20,40",
        "--paths",
        "100",
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&dir.path().join("exass.json"));
    assert_eq!(r["heuristic"], true);
    assert_eq!(r["trend"], "flat");
    let csv = std::fs::read_to_string(dir.path().join("exass.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let o = riskctl(&[
        "diagnose-exass",
        "--model",
        &model("drift.json"),
        "--x0",
        "3",
        "--reference-radius",
        "1",
        "--horizons",
        "5,10",
        "--paths",
        "20",
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn example_harmonic_writes_model_and_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = riskctl(&[
        "example-harmonic",
        "--n",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let cf = json(&dir.path().join("closed_form.json"));
    assert_eq!(cf["k"], 2);
    assert!((cf["lambda"].as_f64().unwrap() - 0.25).abs() < 1e-15);
    assert!((cf["w1"].as_f64().unwrap() + 0.25).abs() < 1e-15);
    let m = riskctl_core::load_model(
        std::fs::File::open(dir.path().join("harmonic_model.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m.num_states(), 2);
}
