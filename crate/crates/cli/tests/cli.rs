use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_permanental"))
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn canonical(dir: &TempDir) -> PathBuf {
    write(dir, "can.json", r#"{"n": 2, "matrix": [[2, -1], [-1, 2]]}"#)
}

#[test]
fn check_exit_codes() {
    let dir = TempDir::new().unwrap();
    let good = canonical(&dir);
    let o = run(&["check", good.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["certified"], true);
    assert_eq!(v["rho"].as_f64().unwrap(), 0.5);

    let bad = write(&dir, "bad.txt", "2\n2 0.5\n-1 2\n");
    let o = run(&["check", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let v: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["reason"], "OffDiagPositive");
    assert_eq!(v["index"], serde_json::json!([0, 1]));

    let malformed = write(&dir, "mal.json", "{\"n\": 2, \"matrix\": [[1, 2]");
    assert_eq!(run(&["check", malformed.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["check", "/nonexistent/file"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn perm_examples() {
    let dir = TempDir::new().unwrap();
    let ones = write(&dir, "ones.txt", "3\n1 1 1\n1 1 1\n1 1 1\n");
    let o = run(&["perm", "--alpha", "0.5", "--format", "text", ones.to_str().unwrap()]);
    assert_eq!(stdout(&o).trim(), "1.875");
    let o = run(&["perm", "--alpha", "0.5", ones.to_str().unwrap()]);
    let v: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["value"].as_f64().unwrap(), 1.875);

    let c = write(&dir, "c.txt", "3\n1 2 3\n4 5 6\n7 8 9\n");
    let o = run(&["perm", "--alpha", "1", "--k", "0,2,0", c.to_str().unwrap()]);
    let v: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    // [[5,5],[5,5]] at alpha = 1
    assert_eq!(v["value"].as_f64().unwrap(), 50.0);
}

#[test]
fn zpmf_trailer() {
    let dir = TempDir::new().unwrap();
    let o = run(&["zpmf", "--epsilon", "1e-8", canonical(&dir).to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let first = &lines[0];
    assert_eq!(first["k"], serde_json::json!([0, 0]));
    assert!((first["p"].as_f64().unwrap() - 0.75).abs() < 1e-15);
    let trailer = lines.last().unwrap();
    assert!(trailer["deficit"].as_f64().unwrap() <= 1e-8);
    assert!(trailer["K"].as_u64().unwrap() > 0);
    let total: f64 = lines[..lines.len() - 1].iter().map(|l| l["p"].as_f64().unwrap()).sum();
    assert!((1.0 - total - trailer["deficit"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn sample_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let m = canonical(&dir);
    let a = run(&["sample", "--n", "10", "--seed", "7", m.to_str().unwrap()]);
    let b = run(&["sample", "--n", "10", "--seed", "7", "--workers", "3", m.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert_eq!(text.lines().count(), 11);
    assert_eq!(text.lines().next().unwrap(), "x1,x2");
    for line in text.lines().skip(1) {
        for cell in line.split(',') {
            assert!(cell.parse::<f64>().unwrap() >= 0.0);
        }
    }
    let out = dir.path().join("draws.csv");
    let c = run(&["sample", "--n", "10", "--seed", "7", "--out", out.to_str().unwrap(), m.to_str().unwrap()]);
    assert_eq!(c.status.code(), Some(0));
    assert_eq!(std::fs::read(&out).unwrap(), a.stdout);
    let d = run(&["sample", "--n", "10", "--seed", "8", m.to_str().unwrap()]);
    assert_ne!(d.stdout, a.stdout);
}

#[test]
fn symmetrize_writes_matrix() {
    let dir = TempDir::new().unwrap();
    let m = write(&dir, "cyc.txt", "3\n3 -1 0\n0 3 -1\n-1 0 3\n");
    let out = dir.path().join("sym.json");
    let o = run(&["symmetrize", "--out", out.to_str().unwrap(), m.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let sym: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(sym["matrix"][0][1].as_f64().unwrap(), 0.0);
    assert_eq!(sym["matrix"][2][2].as_f64().unwrap(), 3.0);
    let first: Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(first["identity"], "det_sym_ge_det");
    assert_eq!(first["lhs"].as_f64().unwrap(), 27.0);
    // the written file is itself a valid input
    assert_eq!(run(&["check", out.to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn verify_exact_canonical() {
    let dir = TempDir::new().unwrap();
    let o = run(&["verify", "--suite", "exact", canonical(&dir).to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    for line in stdout(&o).lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["v"], 1);
        assert_eq!(v["pass"], true, "{line}");
    }
}

#[test]
fn verify_mc_reruns_identically() {
    let dir = TempDir::new().unwrap();
    let m = canonical(&dir);
    let args = ["verify", "--suite", "mc", "--n", "20000", "--seed", "3", m.to_str().unwrap()];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn verify_rejects_bad_config() {
    let dir = TempDir::new().unwrap();
    let m = canonical(&dir);
    assert_eq!(run(&["verify", "--n", "10", m.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--alpha", "-1", m.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--suite", "nope", m.to_str().unwrap()]).status.code(), Some(2));
    let bad = write(&dir, "bad.txt", "2\n1 1\n1 1\n");
    assert_eq!(run(&["verify", bad.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn text_format_and_schema() {
    let dir = TempDir::new().unwrap();
    let o = run(&["moments", "--format", "text", canonical(&dir).to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS ")));
    let o = run(&["--schema"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["version"], 1);
    assert!(v["required"].as_array().unwrap().iter().any(|x| x == "anchor"));
}

#[test]
fn near_critical_warning() {
    let dir = TempDir::new().unwrap();
    let m = write(&dir, "near.txt", "2\n1 -0.96\n-0.96 1\n");
    let o = run(&["check", m.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["perm", m.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["zpmf", "--epsilon", "1e-3", m.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}
