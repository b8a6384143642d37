use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn aging_bus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aging-bus"))
        .args(args)
        .output()
        .expect("spawn aging-bus")
}

fn run_in(dir: &Path, kind: &str, config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        kind,
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    aging_bus(&args)
}

#[test]
fn linear_means_are_powers_of_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        "mean-tables",
        &configs().join("mean-tables-linear.json"),
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().last().unwrap().starts_with("PASS mean-tables"));

    let csv = fs::read_to_string(dir.path().join("means.csv")).unwrap();
    let mut seen = 0;
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols[1] != "1.0" {
            continue;
        }
        let n: i32 = cols[2].parse().unwrap();
        assert_eq!(cols[4].parse::<f64>().unwrap(), 2f64.powi(n), "n = {n}");
        seen += 1;
    }
    assert_eq!(seen, 61);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], true);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["outputs"]["means.csv"].as_str().unwrap().len() == 64);
}

#[test]
fn failing_assertion_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        "bp-convergence",
        &configs().join("bp-convergence.json"),
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("FAIL age 0 frequency"));
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn kind_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "regimes", &configs().join("mean-tables.json"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mean-tables"));
}

#[test]
fn bad_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"kind":"regimes","params":{"alpah":0.5}}"#).unwrap();
    let out = run_in(&dir.path().join("out"), "regimes", &config, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.alpah"));

    fs::write(&config, r#"{"kind":"coalescence","params":{"alpha":1.2}}"#).unwrap();
    let out = run_in(&dir.path().join("out"), "coalescence", &config, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.alpha"));
}

#[test]
fn zero_workers_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        "mean-tables",
        &configs().join("mean-tables-linear.json"),
        &["--workers", "0"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("workers"));
}

#[test]
fn worker_count_and_seed_override() {
    let config = configs().join("bus-branching-equivalence.json");
    let digest = |workers: &str, seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = run_in(
            dir.path(),
            "bus-branching-equivalence",
            &config,
            &["--workers", workers, "--seed", seed],
        );
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["master_seed"].as_u64().unwrap().to_string(), seed);
        manifest["outputs"]["samples.csv"].as_str().unwrap().to_string()
    };
    let one = digest("1", "7");
    assert_eq!(one, digest("4", "7"));
    assert_ne!(one, digest("4", "9"));
}
