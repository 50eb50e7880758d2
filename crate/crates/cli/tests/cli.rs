use std::path::Path;
use std::process::{Command, Output};

fn dirsq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dirsq")).args(args).output().expect("spawn dirsq")
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = dirsq(&["bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_values_are_usage_errors() {
    assert_eq!(dirsq(&["norms", "--grid", "100"]).status.code(), Some(2));
    assert_eq!(dirsq(&["norms", "--tol", "nonsense=1"]).status.code(), Some(2));
    assert_eq!(dirsq(&["polygon", "--harness", "meyer"]).status.code(), Some(2));
    assert_eq!(dirsq(&["kakeya", "--harness", "nope"]).status.code(), Some(2));
}

#[test]
fn polygon_residual_at_full_size() {
    let out = dirsq(&["polygon", "--n", "64", "--grid", "1024"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("experiment,N,p,ratio,exponentFit,gridN,L,seed\n"));
    let residual = rows(&csv).into_iter().find(|r| r[0] == "polygon-residual").expect("residual row");
    assert_eq!(residual[1], "64");
    assert_eq!(residual[5], "1024");
    assert!(residual[3].parse::<f64>().unwrap() <= 1e-10);
}

#[test]
fn kakeya_sweep_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let out = dirsq(&["kakeya", "--sweep", "8,16,32", "--p", "4", "--grid", "256", "--seed", "7", "--out", path.to_str().unwrap()]);
        assert_ne!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(path).unwrap()
    };
    let a = run("a.csv");
    let b = run("b.csv");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let meyer: Vec<usize> = rows(&text).iter().filter(|r| r[0] == "meyer").map(|r| r[1].parse().unwrap()).collect();
    assert!(meyer.starts_with(&[8, 16, 32]) && meyer.len() == 3, "{meyer:?}");
    for r in rows(&text) {
        assert_eq!(r[7], "7");
        assert_eq!(r[2].parse::<f64>().unwrap(), 4.0);
    }
}

#[test]
fn config_file_and_json_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("norms.json");
    std::fs::write(&cfg, r#"{"experiment": "norms", "sweep": [8, 16], "grid": 64, "seed": 3}"#).unwrap();
    let json = dir.path().join("record.json");
    let out = dirsq(&["norms", "--config", cfg.to_str().unwrap(), "--json", json.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let record: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(record["complete"], true);
    assert_eq!(record["config"]["seed"], 3);
    assert!(Path::new(&json).exists());

    let wrong = dirsq(&["polygon", "--config", cfg.to_str().unwrap()]);
    assert_eq!(wrong.status.code(), Some(2));
}

#[test]
fn time_cap_gives_partial_output_and_failure() {
    let out = dirsq(&["norms", "--sweep", "8,16,32,64", "--grid", "1024", "--max-seconds", "0.001"]);
    assert_eq!(out.status.code(), Some(1));
    let csv = String::from_utf8(out.stdout).unwrap();
    let ns: std::collections::BTreeSet<String> = rows(&csv).into_iter().map(|r| r[1].clone()).collect();
    assert!(ns.len() < 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("time cap"));
}
