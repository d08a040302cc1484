use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn jumprev(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jumprev"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("run jumprev")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn zero_paths_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = jumprev(&["simulate", "--demo", "poisson", "--paths", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_paths"));
}

#[test]
fn unknown_demo_and_missing_config_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(jumprev(&["demo", "nope"], dir.path()).status.code(), Some(2));
    assert_eq!(jumprev(&["simulate"], dir.path()).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[process]\nhorizon = -1\n").unwrap();
    assert_eq!(jumprev(&["simulate", "--config", bad.to_str().unwrap()], dir.path()).status.code(), Some(2));
}

#[test]
fn demos_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let out = jumprev(&["demos"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["poisson", "cycle3", "reversible", "levy", "tilt"] {
        assert!(text.lines().any(|l| l == name));
    }
}

#[test]
fn simulate_twice_gives_identical_ensembles() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = jumprev(&["simulate", "--demo", "poisson", "--paths", "2000"], d.path());
        assert!(out.status.success());
    }
    assert_eq!(fs::read(a.path().join("ensemble.jsonl")).unwrap(), fs::read(b.path().join("ensemble.jsonl")).unwrap());
    let c = tempfile::tempdir().unwrap();
    jumprev(&["simulate", "--demo", "poisson", "--paths", "2000", "--seed", "8"], c.path());
    assert_ne!(fs::read(a.path().join("ensemble.jsonl")).unwrap(), fs::read(c.path().join("ensemble.jsonl")).unwrap());
}

#[test]
fn poisson_backward_kernel_has_k_over_t() {
    let dir = tempfile::tempdir().unwrap();
    let out = jumprev(&["reverse", "--demo", "poisson"], dir.path());
    assert!(out.status.success());
    let csv = read(dir.path(), "backward_kernel.csv");
    assert!(csv.starts_with("t,from,to,rate\n"));
    let row = csv
        .lines()
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|f| f[0].parse::<f64>().unwrap_or(-1.0) == 0.5 && f[1] == "2" && f[2] == "1")
        .expect("row t=0.5, 2 -> 1");
    assert!((row[3].parse::<f64>().unwrap() - 4.0).abs() < 1e-9);
    assert!(read(dir.path(), "backward_drift.csv").starts_with("t,state,b0\n"));
}

#[test]
fn cycle_backward_kernel_is_the_reversed_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = String::from(include_str!("../demos/cycle3.toml"));
    cfg = cfg.replace("p = [1.0, 0.0, 0.0]", "p = [0.3333333333333333, 0.3333333333333333, 0.3333333333333334]");
    let path = dir.path().join("cycle.toml");
    fs::write(&path, cfg).unwrap();
    let out = jumprev(&["reverse", "--config", path.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for line in read(dir.path(), "backward_kernel.csv").lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (from, to): (usize, usize) = (f[1].parse().unwrap(), f[2].parse().unwrap());
        assert_eq!(to, (from + 2) % 3);
        assert!((f[3].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn levy_demo_writes_the_reversed_characteristics() {
    let dir = tempfile::tempdir().unwrap();
    let out = jumprev(&["simulate", "--demo", "levy", "--paths", "200"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sidecar: toml::Value = read(dir.path(), "levy_reversal.toml").parse().unwrap();
    assert_eq!(sidecar["drift"].as_array().unwrap()[0].as_float(), Some(-0.5));
    let atom = &sidecar["kernel"]["atoms"][0];
    assert_eq!(atom["jump"].as_array().unwrap()[0].as_float(), Some(1.0));
    assert_eq!(atom["weight"].as_float(), Some(0.5));
    let density = &sidecar["kernel"]["density"];
    assert_eq!((density["lower"].as_float(), density["upper"].as_float()), (Some(-1.0), Some(0.0)));
    assert_eq!(density["reflected"].as_bool(), Some(true));
}

#[test]
fn zero_support_reports_the_offending_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = jumprev(&["demo", "zero-support"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("zero-mass state [1.0]"));
    let csv = read(dir.path(), "absolute_continuity.csv");
    let first = csv.lines().nth(1).unwrap();
    assert!(first.starts_with("0.0000000000000000e0,1,") && first.ends_with(",0"));
}

#[test]
fn marginals_and_entropy_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert!(jumprev(&["marginals", "--demo", "cycle3"], dir.path()).status.success());
    assert!(read(dir.path(), "marginals.csv").starts_with("t,"));
    let out = jumprev(&["entropy", "--demo", "tilt", "--paths", "2000"], dir.path());
    assert!(out.status.success());
    let csv = read(dir.path(), "entropy.csv");
    let total: f64 = csv.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!((total - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-6);
    assert!(read(dir.path(), "entropy_mc.csv").starts_with("n_paths,mean_log_likelihood,standard_error\n"));
}
