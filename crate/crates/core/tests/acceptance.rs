//! Acceptance run: every criterion against the shipped configs, one
//! PASS/FAIL line each. Exits nonzero if a criterion fails that is not on
//! the known-unattainable list.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use agingbus_core::experiments::{run, Assertion, ExperimentConfig, ExperimentOutput, RunOptions};
use agingbus_core::RunManifest;

struct Criterion {
    id: u32,
    title: &'static str,
    configs: &'static [&'static str],
    select: fn(&Assertion) -> bool,
    /// Assertions matching this prefix are expected to fail; the reason is
    /// printed with the verdict.
    unattainable: Option<(&'static str, &'static str)>,
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        title: "Borel law",
        configs: &["distributions-check"],
        select: |a| a.name.starts_with("borel("),
        unattainable: None,
    },
    Criterion {
        id: 2,
        title: "Borel-Tanner law and moments",
        configs: &["distributions-check"],
        select: |a| a.name.starts_with("borel-tanner("),
        unattainable: None,
    },
    Criterion {
        id: 3,
        title: "Leslie spectral radius",
        configs: &["mean-tables"],
        select: |a| a.name.contains("rho") || a.name.contains("remainder"),
        unattainable: None,
    },
    Criterion {
        id: 4,
        title: "exact-mean kernel identities and bounds",
        configs: &["kernel-bounds"],
        select: |_| true,
        unattainable: None,
    },
    Criterion {
        id: 5,
        title: "forward/backward means, linear profile",
        configs: &["mean-tables", "mean-tables-linear"],
        select: |a| {
            a.name.contains("forward/backward") || a.name.contains("(m+1)^n") || a.name.starts_with("means.csv")
        },
        unattainable: None,
    },
    Criterion {
        id: 6,
        title: "normalized branching process diagnostics",
        configs: &["bp-convergence"],
        select: |_| true,
        unattainable: Some((
            "age ",
            "the limit frequencies m/(m+1)^(k+1) differ from the exact generation-40 \
             frequencies by about 1e-4, while the pooled Monte Carlo error is about 1e-7",
        )),
    },
    Criterion {
        id: 7,
        title: "growth regimes and conditional-mean inequality",
        configs: &["regimes"],
        select: |_| true,
        unattainable: None,
    },
    Criterion {
        id: 8,
        title: "bus line vs branching process with immigration",
        configs: &["bus-branching-equivalence"],
        select: |_| true,
        unattainable: None,
    },
    Criterion {
        id: 9,
        title: "subcritical bus speed and Gaussian fluctuations",
        configs: &["bus-single"],
        select: |_| true,
        unattainable: None,
    },
    Criterion {
        id: 10,
        title: "two-bus coalescence",
        configs: &[
            "coalescence-subcritical",
            "coalescence-supercritical",
            "coalescence-logarithmic",
        ],
        select: |_| true,
        unattainable: None,
    },
];

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("{name}.json"))
}

struct Run {
    manifest: RunManifest,
    output: ExperimentOutput,
    dir: PathBuf,
}

fn run_config(config: &ExperimentConfig, dir: PathBuf, workers: usize) -> Run {
    let options = RunOptions {
        workers: Some(workers),
        seed: None,
        out_dir: Some(dir.clone()),
    };
    let (manifest, output) = run(config, &options).unwrap_or_else(|e| panic!("{}: {e}", config.kind));
    Run { manifest, output, dir }
}

/// Every `m_n` in the linear means table must equal `(m+1)^n` as a float,
/// for the horizons where `(m+1)^n` is representable exactly.
fn linear_means_exact(dir: &Path) -> Assertion {
    let mut reader = csv::Reader::from_path(dir.join("means.csv")).expect("means.csv");
    let mut mismatches = 0usize;
    for row in reader.records() {
        let row = row.expect("row");
        let m: f64 = row[1].parse().unwrap();
        let n: i32 = row[2].parse().unwrap();
        let m_n: f64 = row[4].parse().unwrap();
        let exact = (m == 1.0 && n <= 1000) || (m == 0.5 && n <= 33);
        if exact && m_n != (m + 1.0).powi(n) {
            mismatches += 1;
        }
    }
    Assertion::le("means.csv: linear rows with m_n != (m+1)^n", mismatches as f64, 0.0)
}

fn csv_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .expect("output dir")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).expect("csv"),
            )
        })
        .collect()
}

fn main() -> ExitCode {
    let root = tempfile::tempdir().expect("tempdir");
    let start = Instant::now();

    let mut names: Vec<&str> = CRITERIA.iter().flat_map(|c| c.configs.iter().copied()).collect();
    names.sort();
    names.dedup();
    let mut runs = BTreeMap::new();
    for name in &names {
        let config = ExperimentConfig::from_file(&config_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut r = run_config(&config, root.path().join("first").join(name), 4);
        if *name == "mean-tables-linear" {
            let a = linear_means_exact(&r.dir);
            r.output.assertions.push(a);
        }
        runs.insert(*name, r);
    }

    let mut hard_failures = 0;
    for c in CRITERIA {
        let mut failed: Vec<&Assertion> = Vec::new();
        let mut known: Vec<&Assertion> = Vec::new();
        let mut count = 0;
        for name in c.configs {
            for a in runs[name].output.assertions.iter().filter(|a| (c.select)(a)) {
                count += 1;
                if a.pass {
                    continue;
                }
                match c.unattainable {
                    Some((prefix, _)) if a.name.starts_with(prefix) => known.push(a),
                    _ => failed.push(a),
                }
            }
        }
        assert!(count > 0, "criterion {} selected no assertions", c.id);
        let verdict = if failed.is_empty() && known.is_empty() {
            "PASS"
        } else {
            "FAIL"
        };
        let mut line = format!(
            "{verdict} criterion {} ({}): {}/{} checks",
            c.id,
            c.title,
            count - failed.len() - known.len(),
            count
        );
        if !known.is_empty() {
            let (_, reason) = c.unattainable.expect("known failures imply a reason");
            line.push_str(&format!("; {} known unattainable: {reason}", known.len()));
        }
        println!("{line}");
        for a in failed.iter().chain(&known) {
            println!("    {a}");
        }
        hard_failures += failed.len();
    }

    // Reproducibility: rerun each config from the config recorded in its
    // manifest, on one worker instead of four.
    let mut differing = Vec::new();
    for name in &names {
        let first = &runs[name];
        let manifest: serde_json::Value =
            serde_json::from_slice(&fs::read(first.dir.join("manifest.json")).expect("manifest")).expect("json");
        let config = ExperimentConfig::from_json(&manifest["config"].to_string()).expect("manifest config");
        let again = run_config(&config, root.path().join("again").join(name), 1);
        let csv_same = csv_bytes(&first.dir) == csv_bytes(&again.dir);
        let digests_same = first.manifest.outputs == again.manifest.outputs;
        if !(csv_same && digests_same && first.manifest.replicate_seeds == again.manifest.replicate_seeds) {
            differing.push(*name);
        }
    }
    let verdict = if differing.is_empty() { "PASS" } else { "FAIL" };
    println!(
        "{verdict} criterion 11 (byte-identical reruns, 4 vs 1 workers): {}/{} configs identical",
        names.len() - differing.len(),
        names.len()
    );
    for name in &differing {
        println!("    differs: {name}");
    }
    hard_failures += differing.len();

    println!("acceptance finished in {:.1} s", start.elapsed().as_secs_f64());
    if hard_failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
