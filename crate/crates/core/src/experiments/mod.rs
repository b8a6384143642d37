//! Seeded experiment runs: configuration, assertion reports, CSV/JSON
//! artifacts and run manifests.

mod bp_convergence;
mod bus_single;
mod coalescence;
mod distributions_check;
mod equivalence;
mod kernel_bounds;
mod mean_tables;
mod regimes;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seed::seed_derive;

pub use bp_convergence::BpConvergenceParams;
pub use bus_single::BusSingleParams;
pub use coalescence::{CoalescenceExpectation, CoalescenceParams};
pub use distributions_check::DistributionsCheckParams;
pub use equivalence::EquivalenceParams;
pub use kernel_bounds::KernelBoundsParams;
pub use mean_tables::MeanTablesParams;
pub use regimes::RegimesParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    DistributionsCheck,
    MeanTables,
    KernelBounds,
    BpConvergence,
    Regimes,
    BusSingle,
    BusBranchingEquivalence,
    Coalescence,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::DistributionsCheck,
        ExperimentKind::MeanTables,
        ExperimentKind::KernelBounds,
        ExperimentKind::BpConvergence,
        ExperimentKind::Regimes,
        ExperimentKind::BusSingle,
        ExperimentKind::BusBranchingEquivalence,
        ExperimentKind::Coalescence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::DistributionsCheck => "distributions-check",
            ExperimentKind::MeanTables => "mean-tables",
            ExperimentKind::KernelBounds => "kernel-bounds",
            ExperimentKind::BpConvergence => "bp-convergence",
            ExperimentKind::Regimes => "regimes",
            ExperimentKind::BusSingle => "bus-single",
            ExperimentKind::BusBranchingEquivalence => "bus-branching-equivalence",
            ExperimentKind::Coalescence => "coalescence",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A run request as read from JSON. `params` holds the kind-specific
/// settings; absent entries take the documented defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default = "empty_object")]
    pub params: serde_json::Value,
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, master_seed: u64, params: serde_json::Value) -> Self {
        Self {
            kind,
            master_seed,
            output: None,
            params,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| config_error("", e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Parses and checks the kind-specific parameters.
    pub fn validate(&self) -> Result<()> {
        self.experiment().map(|_| ())
    }

    fn experiment(&self) -> Result<Box<dyn Experiment>> {
        Ok(match self.kind {
            ExperimentKind::DistributionsCheck => Box::new(parse::<DistributionsCheckParams>(&self.params)?),
            ExperimentKind::MeanTables => Box::new(parse::<MeanTablesParams>(&self.params)?),
            ExperimentKind::KernelBounds => Box::new(parse::<KernelBoundsParams>(&self.params)?),
            ExperimentKind::BpConvergence => Box::new(parse::<BpConvergenceParams>(&self.params)?),
            ExperimentKind::Regimes => Box::new(parse::<RegimesParams>(&self.params)?),
            ExperimentKind::BusSingle => Box::new(parse::<BusSingleParams>(&self.params)?),
            ExperimentKind::BusBranchingEquivalence => Box::new(parse::<EquivalenceParams>(&self.params)?),
            ExperimentKind::Coalescence => Box::new(parse::<CoalescenceParams>(&self.params)?),
        })
    }

    /// SHA-256 of the canonical JSON form, output location excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        hex_digest(&serde_json::to_vec(&c).expect("config serializes"))
    }
}

fn config_error<E: std::fmt::Display>(prefix: &str, e: serde_path_to_error::Error<E>) -> Error {
    let path = e.path().to_string();
    let inner = e.inner().to_string();
    // missing and unknown keys are reported by serde at the parent path
    let field = match (
        inner.strip_prefix("missing field `"),
        inner.strip_prefix("unknown field `"),
    ) {
        (Some(rest), _) | (_, Some(rest)) => {
            let key = rest.split('`').next().unwrap_or("");
            let parent = if path == "." { "" } else { &path };
            // unknown keys already end the path
            if parent == key || parent.ends_with(&format!(".{key}")) {
                join_path(prefix, parent)
            } else {
                join_path(prefix, &join_path(parent, key))
            }
        }
        _ => join_path(prefix, if path == "." { "" } else { &path }),
    };
    Error::Config { field, reason: inner }
}

fn join_path(a: &str, b: &str) -> String {
    match (a.is_empty(), b.is_empty()) {
        (true, _) => b.to_string(),
        (_, true) => a.to_string(),
        _ => format!("{a}.{b}"),
    }
}

fn parse<T: DeserializeOwned + Validate>(params: &serde_json::Value) -> Result<T> {
    let parsed: T = serde_path_to_error::deserialize(params.clone()).map_err(|e| config_error("params", e))?;
    parsed.validate()?;
    Ok(parsed)
}

/// Kind-specific parameter checks; errors name the offending field.
pub(crate) trait Validate {
    fn validate(&self) -> Result<()>;
}

pub(crate) fn field_error(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: format!("params.{field}"),
        reason: reason.into(),
    }
}

pub(crate) fn check_alpha(field: &str, alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(field_error(field, format!("must lie in (0, 1), got {alpha}")))
    }
}

pub(crate) fn check_positive(field: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(field_error(field, format!("must be finite and > 0, got {x}")))
    }
}

pub(crate) fn check_count(field: &str, n: usize) -> Result<()> {
    if n >= 1 {
        Ok(())
    } else {
        Err(field_error(field, "must be >= 1"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

/// One checked inequality `lhs relation rhs`, kept with both sides.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Assertion {
    pub fn new(name: impl Into<String>, lhs: f64, relation: Relation, rhs: f64) -> Self {
        let pass = match relation {
            Relation::Lt => lhs < rhs,
            Relation::Le => lhs <= rhs,
            Relation::Gt => lhs > rhs,
            Relation::Ge => lhs >= rhs,
        };
        Self {
            name: name.into(),
            lhs,
            relation,
            rhs,
            pass,
            note: None,
        }
    }

    pub fn le(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::new(name, lhs, Relation::Le, rhs)
    }

    pub fn lt(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::new(name, lhs, Relation::Lt, rhs)
    }

    pub fn ge(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::new(name, lhs, Relation::Ge, rhs)
    }

    pub fn gt(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::new(name, lhs, Relation::Gt, rhs)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

impl std::fmt::Display for Assertion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let rel = match self.relation {
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Gt => ">",
            Relation::Ge => ">=",
        };
        write!(
            f,
            "{} {}: {} {rel} {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            fmt_f64(self.lhs),
            fmt_f64(self.rhs)
        )
    }
}

/// A CSV file produced by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.to_string()))
    }
}

/// Shortest decimal that reads back to the same `f64`; `inf`, `-inf` and
/// `NaN` for non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        serde_json::Number::from_f64(x).expect("finite").to_string()
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Everything an experiment produced, before it is written out.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub assertions: Vec<Assertion>,
    pub tables: Vec<Table>,
    /// Extra JSON files, by file name.
    pub documents: Vec<(String, serde_json::Value)>,
    pub metrics: BTreeMap<String, f64>,
    /// Stream seeds in replicate order.
    pub seeds: Vec<u64>,
    /// Replicates lost to overflow or other per-replicate errors.
    pub failures: usize,
}

impl ExperimentOutput {
    pub(crate) fn new() -> Self {
        Self {
            assertions: Vec::new(),
            tables: Vec::new(),
            documents: Vec::new(),
            metrics: BTreeMap::new(),
            seeds: Vec::new(),
            failures: 0,
        }
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    pub(crate) fn assert(&mut self, a: Assertion) {
        self.assertions.push(a);
    }

    pub(crate) fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }
}

pub(crate) trait Experiment: Send + Sync {
    fn run(&self, master_seed: u64) -> Result<ExperimentOutput>;
}

/// Maps `f` over `seeds` on the current rayon pool, keeping seed order.
pub(crate) fn farm<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    seeds.par_iter().map(|&s| f(s)).collect()
}

/// Seeds of `count` replicates in stream `stream` of a run.
pub(crate) fn stream_seeds(master: u64, stream: u64, count: usize) -> Vec<u64> {
    let base = seed_derive(master, stream);
    (0..count as u64).map(|i| seed_derive(base, i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub kind: ExperimentKind,
    pub pass: bool,
    pub failures: usize,
    pub assertions: Vec<Assertion>,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub master_seed: u64,
    pub replicate_seeds: Vec<u64>,
    pub tool_version: String,
    pub workers: Option<usize>,
    pub wall_clock_seconds: f64,
    /// File name to SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Thread count; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Overrides `master_seed`.
    pub seed: Option<u64>,
    /// Overrides `output`.
    pub out_dir: Option<PathBuf>,
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs `config` in memory, on `workers` threads when given.
pub fn execute(config: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentOutput> {
    let experiment = config.experiment()?;
    match workers {
        Some(k) => {
            if k == 0 {
                return Err(Error::Config {
                    field: "workers".into(),
                    reason: "must be >= 1".into(),
                });
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::Io(e.to_string()))?;
            pool.install(|| experiment.run(config.master_seed))
        }
        None => experiment.run(config.master_seed),
    }
}

/// Runs `config` and writes its tables, `summary.json` and `manifest.json`.
pub fn run(config: &ExperimentConfig, options: &RunOptions) -> Result<(RunManifest, ExperimentOutput)> {
    let mut config = config.clone();
    if let Some(seed) = options.seed {
        config.master_seed = seed;
    }
    if let Some(dir) = &options.out_dir {
        config.output = Some(dir.clone());
    }
    let dir = config
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(config.kind.name()));
    config.output = Some(dir.clone());
    config.validate()?;
    let start = Instant::now();
    let output = execute(&config, options.workers)?;
    let wall_clock_seconds = start.elapsed().as_secs_f64();

    fs::create_dir_all(&dir)?;
    let mut outputs = BTreeMap::new();
    for table in &output.tables {
        let bytes = table.to_csv()?;
        outputs.insert(table.name.clone(), hex_digest(&bytes));
        fs::write(dir.join(&table.name), bytes)?;
    }
    for (name, doc) in &output.documents {
        let bytes = serde_json::to_vec_pretty(doc)?;
        outputs.insert(name.clone(), hex_digest(&bytes));
        fs::write(dir.join(name), bytes)?;
    }
    let summary = Summary {
        kind: config.kind,
        pass: output.passed(),
        failures: output.failures,
        assertions: output.assertions.clone(),
        metrics: output.metrics.clone(),
    };
    let summary_bytes = serde_json::to_vec_pretty(&summary)?;
    outputs.insert("summary.json".into(), hex_digest(&summary_bytes));
    fs::write(dir.join("summary.json"), summary_bytes)?;

    let manifest = RunManifest {
        config_sha256: config.hash(),
        master_seed: config.master_seed,
        replicate_seeds: output.seeds.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        workers: options.workers,
        wall_clock_seconds,
        outputs,
        config,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok((manifest, output))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_round_trip_names() {
        for k in ExperimentKind::ALL {
            assert_eq!(ExperimentKind::from_name(k.name()), Some(k));
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
    }

    #[test]
    fn config_errors_name_the_field() {
        let err = ExperimentConfig::from_json(r#"{"kind":"coalescence","params":{"alpha":1.5}}"#).unwrap_err();
        assert!(
            matches!(err, Error::Config { ref field, .. } if field == "params.alpha"),
            "{err:?}"
        );
        let err = ExperimentConfig::from_json(r#"{"kind":"coalescence","params":{"alpah":0.2}}"#).unwrap_err();
        assert!(
            matches!(err, Error::Config { ref field, .. } if field == "params.alpah"),
            "{err:?}"
        );
        let err = ExperimentConfig::from_json(r#"{"kind":"regimes","params":{"replicates":"many"}}"#).unwrap_err();
        assert!(
            matches!(err, Error::Config { ref field, .. } if field == "params.replicates"),
            "{err:?}"
        );
        let err = ExperimentConfig::from_json(r#"{"kind":"nope"}"#).unwrap_err();
        assert!(
            matches!(err, Error::Config { ref field, .. } if field == "kind"),
            "{err:?}"
        );
        let err = ExperimentConfig::from_json(
            r#"{"kind":"mean-tables","params":{"profiles":[{"family":"custom","values":[0,2,3]}]}}"#,
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::Config { ref field, .. } if field == "params.profiles[0]"),
            "{err:?}"
        );
    }

    #[test]
    fn float_formatting() {
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(1e300), "1e+300");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(2.0), "2.0");
        for x in [1.0 / 3.0, 2f64.powi(60), 1e-17, 123456.789] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn assertion_relations() {
        assert!(Assertion::le("a", 1.0, 1.0).pass);
        assert!(!Assertion::lt("a", 1.0, 1.0).pass);
        assert!(!Assertion::ge("a", f64::NAN, 0.0).pass);
        assert_eq!(Assertion::gt("x", 2.0, 1.0).to_string(), "PASS x: 2.0 > 1.0");
    }
}
