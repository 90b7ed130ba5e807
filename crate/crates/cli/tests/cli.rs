use serde_json::Value;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_openkpz")).args(args).output().unwrap()
}

fn json_line(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim().lines().last().unwrap()).unwrap()
}

#[test]
fn eval_examples() {
    let out = run(&["eval", "C", "--a", "1", "--c", "1", "--tau", "1", "--method", "spectral"]);
    assert!(out.status.success());
    let v = json_line(&out);
    assert!(v["value"].as_f64().unwrap() > 0.0);
    assert!(v.get("err").is_some());

    let out = run(&["eval", "kernel-p", "--t", "1", "--x", "0", "--y", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json_line(&out)["value"].as_f64().unwrap() > 0.0);

    let out = run(&["eval", "psi", "--route", "y_quadrature", "--s", "0.4", "--t", "0.5", "--a", "1", "--c", "1", "--tau", "1"]);
    assert!(out.status.success());
    let v = json_line(&out)["value"].as_f64().unwrap();
    assert!(v.is_finite() && v > 0.0);
}

#[test]
fn eval_errors_use_exit_codes() {
    let out = run(&["eval", "C", "--a", "-1", "--c", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    let e = stderr_json(&out);
    assert_eq!(e["exit_code"], 2);
    assert!(out.stdout.is_empty());
    // missing required argument
    assert_eq!(run(&["eval", "kernel-p", "--t", "1"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn verify_selection() {
    let out = run(&["verify", "--ids", "P_SYMMETRY", "--format", "json"]);
    assert!(out.status.success());
    let v = json_line(&out);
    assert_eq!(v["suite"].as_array().unwrap().len(), 1);
    assert_eq!(v["summary"]["total"], 1);
    assert_eq!(v["summary"]["passed"], 1);

    let out = run(&["verify", "--ids", "NO_SUCH"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("NO_SUCH"));
}

#[test]
fn verify_all_fast() {
    let out = run(&["verify", "--all", "--profile", "fast", "--format", "json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_line(&out);
    assert!(v["summary"]["total"].as_u64().unwrap() >= 25);
    assert_eq!(v["summary"]["passed"], v["summary"]["total"]);
    // every report carries the documented fields
    for r in v["suite"].as_array().unwrap() {
        for key in ["id", "args", "lhs", "rhs", "abs_err", "rel_err", "tol", "pass", "diagnostics"] {
            assert!(r.get(key).is_some(), "{key} missing in {r}");
        }
    }
}

#[test]
fn sample_kpz_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let files: Vec<_> = (0..2).map(|i| dir.path().join(format!("run{i}.csv"))).collect();
    for f in &files {
        let out = run(&[
            "sample", "kpz", "--a", "1", "--c", "1", "--times", "0,0.25,0.5,0.75,1", "--n", "1000", "--seed", "42",
            "--output", f.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stdout.is_empty());
    }
    let a = std::fs::read(&files[0]).unwrap();
    assert_eq!(a, std::fs::read(&files[1]).unwrap());
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("path_id,time,value,weight"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5000);
    for r in &rows {
        assert_eq!(r.len(), 4);
        let t: f64 = r[1].parse().unwrap();
        if t == 0.0 {
            assert_eq!(r[2].parse::<f64>().unwrap(), 0.0);
        }
    }
    assert!(!text.contains('\r'));
}

#[test]
fn sample_outside_range_exits_2() {
    let out = run(&["sample", "kpz", "--a", "-3", "--c", "1", "--times", "0,1", "--n", "10", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert_eq!(stderr_json(&out)["exit_code"], 2);
}

#[test]
fn config_file_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# defaults\na=1.5\nc=0.7\ntau=1\nmethod=direct2d\n").unwrap();
    let path = cfg.to_str().unwrap();
    let from_file = json_line(&run(&["--config", path, "eval", "C"]));
    let direct = json_line(&run(&["eval", "C", "--a", "1.5", "--c", "0.7", "--method", "direct2d"]));
    assert_eq!(from_file["value"], direct["value"]);
    // a flag overrides the file
    let over = json_line(&run(&["--config", path, "eval", "C", "--a", "1"]));
    let want = json_line(&run(&["eval", "C", "--a", "1", "--c", "0.7", "--method", "direct2d"]));
    assert_eq!(over["value"], want["value"]);
    assert_ne!(over["value"], from_file["value"]);
}

#[test]
fn reports_round_trip() {
    let out = run(&["verify", "--ids", "MELLIN_SINGLE,Q_NORM", "--format", "json"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    for r in v["suite"].as_array().unwrap() {
        let rep: openkpz::verify::IdentityReport = serde_json::from_value(r.clone()).unwrap();
        assert_eq!(serde_json::to_value(&rep).unwrap(), *r);
    }
}
