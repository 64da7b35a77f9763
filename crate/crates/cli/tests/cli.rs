use std::fs;
use std::process::{Command, Output};

fn ulam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ulam"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn budget_json() {
    let o = ulam(&["budget", "--eps", "9.5367431640625e-7", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["eps1"].as_f64().unwrap(), 2f64.powi(-18));
    assert_eq!(v["eps2"].as_f64().unwrap(), 2f64.powi(-15));
}

#[test]
fn budget_refuses_large_eps() {
    let o = ulam(&["budget", "--eps", "0.01"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn recover_writes_csv_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# small instance\nshape = 2\nmultiplicities = 3\neta = 1e-3\nprobes = 100\n",
    )
    .unwrap();
    let out = dir.path().join("r.csv");
    let o = ulam(&[
        "recover",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
        "--json",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["report"]["seed"].as_u64(), Some(5));
    let csv = fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(ulam_core::pipeline::SWEEP_HEADER));
    assert!(lines.next().unwrap().starts_with("R0,"));
    assert!(!csv.contains('\r'));
}

#[test]
fn same_seed_same_report() {
    let a = ulam(&["recover", "--seed", "9", "--json"]);
    let b = ulam(&["recover", "--seed", "9", "--json"]);
    let strip = |o: &Output| {
        let mut v: serde_json::Value = serde_json::from_str(&stdout(o)).unwrap();
        v.as_object_mut().unwrap().remove("timings");
        v["row"].as_object_mut().unwrap().remove("seconds");
        v
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn tight_constant_is_an_assertion_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.cfg");
    fs::write(&cfg, "eta = 1e-3\nL = 1e-6\n").unwrap();
    let o = ulam(&["recover", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
}

#[test]
fn inadmissible_input_aborts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("big.cfg");
    fs::write(&cfg, "eta = 0.5\n").unwrap();
    let o = ulam(&["recover", "--config", cfg.to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["aborted"], true);
}

#[test]
fn bad_config_key_aborts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.cfg");
    fs::write(&cfg, "widht = 3\n").unwrap();
    let o = ulam(&["budget", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("widht"));
}

#[test]
fn tower_and_kk_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = ulam(&["tower", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 4);

    let dir2 = tempfile::tempdir().unwrap();
    let cfg = dir2.path().join("kk.cfg");
    fs::write(&cfg, "shape = 2\nmultiplicities = 2\neta = 1e-3\n").unwrap();
    let o = ulam(&["kk", "--config", cfg.to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["estimate"]["upper"].as_f64().unwrap() <= 2e-3 + 1e-6);
}

#[test]
fn small_sweep_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.cfg");
    fs::write(&cfg, "repeats = 1\nprobes = 60\n").unwrap();
    let out = dir.path().join("s.csv");
    let o = ulam(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--etas",
        "1e-3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let ids: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
}
