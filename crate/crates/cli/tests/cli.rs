use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn tvspec() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tvspec"));
    c.env_remove("TVSPEC_SEED");
    c
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

const CONSTANT2: &str = r#"{"dim":1,"horizon":{"min":-2048,"max":2048},"kind":"constant","params":{"m":[2.0]}}"#;

const CONTROL: &str = r#"{
  "dim": 2, "input_dim": 2,
  "horizon": {"min": -16384, "max": 16384},
  "kind": "random_bounded",
  "params": {"base": [1.2, 0.5, 0.0, 0.9], "bound": 0.2, "b": [1, 0, 0, 1]},
  "seed": 3
}"#;

#[test]
fn constant_system_has_log2_point_spectrum() {
    let dir = TempDir::new().unwrap();
    let sys = write(&dir, "c2.json", CONSTANT2);
    let out = run(tvspec().args(["spectrum", "--system"]).arg(&sys));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    let iv = &v["estimate"]["intervals"];
    assert_eq!(iv.as_array().unwrap().len(), 1);
    let ln2 = 2f64.ln();
    assert!((iv[0][0].as_f64().unwrap() - ln2).abs() <= 0.0125);
    assert!((iv[0][1].as_f64().unwrap() - ln2).abs() <= 0.0125);
    assert_eq!(v["config"]["window"], 1024);
    assert_eq!(v["config"]["command"], "spectrum");
}

#[test]
fn csv_curves_have_one_column_per_exponent() {
    let dir = TempDir::new().unwrap();
    let sys = write(&dir, "c2.json", CONSTANT2);
    let csv = dir.path().join("curves.csv");
    let out = run(tvspec()
        .args(["spectrum", "--window", "64", "--system"])
        .arg(&sys)
        .arg("--csv")
        .arg(&csv));
    assert!(out.status.success());
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 2);
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((row[1] - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let sys = write(&dir, "s.json", CONTROL);
    let outs: Vec<Vec<u8>> = (0..2)
        .map(|_| run(tvspec().args(["spectrum", "--verdicts", "--system"]).arg(&sys)).stdout)
        .collect();
    assert!(!outs[0].is_empty());
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn assignment_verifies_and_perturbed_feedback_fails() {
    let dir = TempDir::new().unwrap();
    let sys = write(&dir, "s.json", CONTROL);
    let good = dir.path().join("assignment.json");
    let out = run(tvspec()
        .args(["assign", "--targets", "[-1,-0.5],[0,0]", "--system"])
        .arg(&sys)
        .arg("--out")
        .arg(&good));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut a = json(&good);
    assert_eq!(a["verification"]["passed"], true);
    assert!(a["equivalence_residual"].as_f64().unwrap() < 1e-8);
    assert_eq!(a["system"]["seed"], 3);

    let out = run(tvspec().args(["verify", "--assignment"]).arg(&good));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["passed"], true);

    let n = a["u"].as_array().unwrap().len();
    for k in (0..n).step_by(7) {
        a["u"][k][0] = (a["u"][k][0].as_f64().unwrap() + 0.5).into();
    }
    let bad = write(&dir, "bad.json", &a.to_string());
    let out = run(tvspec().args(["verify", "--tol", "1e-6", "--assignment"]).arg(&bad));
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_eq!(v["passed"], false);
    assert!(v["interval_diff"].is_array() || v["interval_diff"].is_object());
    assert!(v["equivalence_residual"].as_f64().unwrap() > 1e-3);

    let out = run(tvspec().args(["verify", "--assignment"]).arg(&bad));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn demo_end_to_end_assignment_passes() {
    let out = run(tvspec().args([
        "demo",
        "--case",
        "theorem-2.5",
        "--targets",
        "[-1,-0.5],[0,0]",
    ]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["passed"], true);
    assert_eq!(v["verification"]["estimate"]["intervals"].as_array().unwrap().len(), 2);
}

#[test]
fn demo_lemma_cases_pass() {
    for (case, horizon) in [
        ("dyadic", "-16384:16384"),
        ("symmetric-equality", "-16384:16384"),
        ("triangular-inclusion", "-4096:4096"),
        ("lemma-4.2", "-4096:4096"),
    ] {
        let out = run(tvspec().args(["demo", "--case", case, "--horizon", horizon]));
        assert!(out.status.success(), "{case}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn malformed_json_is_an_input_error_with_position() {
    let dir = TempDir::new().unwrap();
    let sys = write(&dir, "bad.json", "{\"dim\": 1,\n \"horizon\": {\"min\": -8, \"max\": 8},\n \"kind\": \"constant\" \"params\": {}}");
    let out = run(tvspec().args(["spectrum", "--system"]).arg(&sys));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn dimension_mismatch_names_the_field() {
    let dir = TempDir::new().unwrap();
    let sys = write(
        &dir,
        "bad.json",
        r#"{"dim":2,"horizon":{"min":-8,"max":8},"kind":"constant","params":{"m":[1,2,3]}}"#,
    );
    let out = run(tvspec().args(["spectrum", "--system"]).arg(&sys));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.m"));
}

#[test]
fn missing_input_matrix_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let sys = write(&dir, "c2.json", CONSTANT2);
    let out = run(tvspec().args(["ucc", "--system"]).arg(&sys));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_exits_2() {
    let out = run(tvspec().args(["spectrum", "--bogus"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_environment_overrides_flag_and_file() {
    let dir = TempDir::new().unwrap();
    let sys = write(&dir, "s.json", CONTROL);
    let with_env = run(tvspec()
        .env("TVSPEC_SEED", "11")
        .args(["spectrum", "--window", "64", "--seed", "5", "--system"])
        .arg(&sys));
    assert_eq!(stdout_json(&with_env)["config"]["seed"], 11);
    let with_flag = run(tvspec().args(["spectrum", "--window", "64", "--seed", "11", "--system"]).arg(&sys));
    assert_eq!(with_env.stdout, with_flag.stdout);
    let from_file = run(tvspec().args(["spectrum", "--window", "64", "--system"]).arg(&sys));
    assert_eq!(stdout_json(&from_file)["config"]["seed"], 3);
    assert_ne!(from_file.stdout, with_flag.stdout);
}

#[test]
fn ucc_reports_certificate() {
    let dir = TempDir::new().unwrap();
    let sys = write(&dir, "s.json", CONTROL);
    let out = run(tvspec().args(["ucc", "--system"]).arg(&sys));
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["certificate"]["ok"], true);
    assert_eq!(v["certificate"]["K"], 1);
}

#[test]
fn lyapunov_of_constant_system() {
    let dir = TempDir::new().unwrap();
    let sys = write(&dir, "c2.json", CONSTANT2);
    let out = run(tvspec().args(["lyapunov", "--samples", "100", "--system"]).arg(&sys));
    assert!(out.status.success());
    let e = stdout_json(&out)["exponents"][0].as_f64().unwrap();
    assert!((e - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn discretize_writes_a_loadable_system() {
    let dir = TempDir::new().unwrap();
    let w = write(
        &dir,
        "w.json",
        r#"{"dim":2,"horizon":{"min":-64,"max":64},"kind":"piecewise_constant",
            "params":{"table":[[1,0,0,-1]],"cyclic":true}}"#,
    );
    let out_path = dir.path().join("sys.json");
    let out = run(tvspec().args(["discretize", "--continuous"]).arg(&w).arg("--out").arg(&out_path));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["method"]["kind"], "exact");
    let sys = json(&out_path);
    assert_eq!(sys["kind"], "explicit");
    let m0 = sys["params"]["m"][0].as_array().unwrap();
    assert!((m0[0].as_f64().unwrap() - 1f64.exp()).abs() < 1e-12);
    assert!((m0[3].as_f64().unwrap() - (-1f64).exp()).abs() < 1e-12);

    let out = run(tvspec().args(["spectrum", "--window", "16", "--system"]).arg(&out_path));
    assert!(out.status.success());
    let iv = &stdout_json(&out)["estimate"]["intervals"];
    assert!((iv[0][0].as_f64().unwrap() + 1.0).abs() <= 0.0125);
    assert!((iv[1][1].as_f64().unwrap() - 1.0).abs() <= 0.0125);
}

#[test]
fn rk4_discretization_reports_substeps() {
    let dir = TempDir::new().unwrap();
    let w = write(
        &dir,
        "w.json",
        r#"{"dim":2,"horizon":{"min":-8,"max":8},"kind":"builtin_callable",
            "params":{"name":"rotation","omega":1.0}}"#,
    );
    let out_path = dir.path().join("sys.json");
    let out = run(tvspec().args(["discretize", "--continuous"]).arg(&w).arg("--out").arg(&out_path));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["method"]["kind"], "rk4");
    assert!(report["substeps_used"].as_u64().unwrap() >= 64);
}
