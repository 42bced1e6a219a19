//! Simulation studies: seeding, replicate execution, persistence.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dgp::{apply_effects, draw_treatment, effect_profile, DgpError, Scenario, TruthTable};
use crate::estimators::{
    run_estimator, ArOptions, AscmOptions, EstimatorId, EstimatorOptions, EstimatorResult,
};
use crate::metrics::{aggregate_records, BiasSummary, MetricsError, MetricsTable, ReplicateRecord};
use crate::panel::{validate_panel, PanelDataset};

pub const RAW_FILE: &str = "raw_results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const RAW_HEADER: [&str; 11] = [
    "scenario",
    "estimator",
    "n_treated",
    "replicate",
    "event_time",
    "estimate",
    "se",
    "ci_low",
    "ci_high",
    "truth",
    "converged",
];

/// Metrics file for one treated-state count.
pub fn metrics_file_name(n_treated: usize) -> String {
    format!("metrics_t{n_treated}.csv")
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("output directory {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error("raw results: {0}")]
    Raw(String),
    #[error(transparent)]
    Dgp(#[from] DgpError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn default_scenarios() -> Vec<Scenario> {
    Scenario::STUDY.to_vec()
}
fn default_n_treated() -> Vec<usize> {
    vec![25]
}
fn default_replicates() -> usize {
    1000
}
fn default_estimators() -> Vec<EstimatorId> {
    EstimatorId::ALL.to_vec()
}
fn default_adoption_first() -> i32 {
    2002
}
fn default_adoption_last() -> i32 {
    2011
}
fn default_nu() -> f64 {
    AscmOptions::default().nu
}
fn default_ridge_lambda() -> f64 {
    AscmOptions::default().ridge_lambda
}
fn default_outcome_lags() -> usize {
    ArOptions::default().outcome_lags
}
fn default_treatment_lags() -> usize {
    ArOptions::default().treatment_lags
}
fn default_bootstrap_reps() -> usize {
    200
}
fn default_true() -> bool {
    true
}
fn default_threads() -> usize {
    1
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// A simulation study. Serialises as a flat JSON object; every key but
/// `seed` and `data` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Baseline panel (CSV).
    pub data: PathBuf,
    pub seed: u64,
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<Scenario>,
    #[serde(default = "default_n_treated")]
    pub n_treated: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorId>,
    #[serde(default = "default_adoption_first")]
    pub adoption_first: i32,
    #[serde(default = "default_adoption_last")]
    pub adoption_last: i32,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_ridge_lambda")]
    pub ridge_lambda: f64,
    #[serde(default = "default_outcome_lags")]
    pub outcome_lags: usize,
    #[serde(default = "default_treatment_lags")]
    pub treatment_lags: usize,
    #[serde(default = "default_bootstrap_reps")]
    pub bootstrap_reps: usize,
    #[serde(default = "default_true")]
    pub use_covariate: bool,
    #[serde(default)]
    pub bias_summary: BiasSummary,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Estimators forced to fail, for exercising failure accounting.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inject_failure: Vec<EstimatorId>,
}

impl SimulationConfig {
    pub const KEYS: [&'static str; 18] = [
        "data",
        "seed",
        "scenarios",
        "n_treated",
        "replicates",
        "estimators",
        "adoption_first",
        "adoption_last",
        "nu",
        "ridge_lambda",
        "outcome_lags",
        "treatment_lags",
        "bootstrap_reps",
        "use_covariate",
        "bias_summary",
        "threads",
        "output_dir",
        "inject_failure",
    ];

    /// A config with every default filled in.
    pub fn new(data: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            data: data.into(),
            seed,
            scenarios: default_scenarios(),
            n_treated: default_n_treated(),
            replicates: default_replicates(),
            estimators: default_estimators(),
            adoption_first: default_adoption_first(),
            adoption_last: default_adoption_last(),
            nu: default_nu(),
            ridge_lambda: default_ridge_lambda(),
            outcome_lags: default_outcome_lags(),
            treatment_lags: default_treatment_lags(),
            bootstrap_reps: default_bootstrap_reps(),
            use_covariate: true,
            bias_summary: BiasSummary::Mean,
            threads: default_threads(),
            output_dir: default_output_dir(),
            inject_failure: Vec::new(),
        }
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::Config(m));
        if self.replicates == 0 {
            return fail("replicates must be at least 1".into());
        }
        if self.scenarios.is_empty() {
            return fail("at least one scenario is required".into());
        }
        if self.estimators.is_empty() {
            return fail("at least one estimator is required".into());
        }
        if self.n_treated.is_empty() || self.n_treated.contains(&0) {
            return fail("n_treated must list positive counts".into());
        }
        if self.adoption_first > self.adoption_last {
            return fail(format!(
                "adoption_first {} is after adoption_last {}",
                self.adoption_first, self.adoption_last
            ));
        }
        if !(0.0..=1.0).contains(&self.nu) {
            return fail(format!("nu must lie in [0, 1], got {}", self.nu));
        }
        if !(self.ridge_lambda >= 0.0) {
            return fail(format!("ridge_lambda must be non-negative, got {}", self.ridge_lambda));
        }
        if self.outcome_lags == 0 {
            return fail("outcome_lags must be at least 1".into());
        }
        if self.bootstrap_reps < 2 {
            return fail("bootstrap_reps must be at least 2".into());
        }
        if self.threads == 0 {
            return fail("threads must be at least 1".into());
        }
        Ok(())
    }

    /// Checks the config against the baseline panel.
    pub fn validate_for(&self, data: &PanelDataset) -> Result<(), HarnessError> {
        self.validate()?;
        let report = validate_panel(data);
        if !report.ok {
            return Err(HarnessError::Config(format!(
                "baseline panel is invalid: {}",
                report.violations.join("; ")
            )));
        }
        if let Some(&n) = self.n_treated.iter().find(|&&n| n >= data.n_states()) {
            return Err(HarnessError::Config(format!(
                "n_treated {n} leaves no never-treated states among {}",
                data.n_states()
            )));
        }
        if self.adoption_first < data.first_year() || self.adoption_last > data.last_year() {
            return Err(HarnessError::Config(format!(
                "adoption years {}-{} fall outside the panel's {}-{}",
                self.adoption_first,
                self.adoption_last,
                data.first_year(),
                data.last_year()
            )));
        }
        Ok(())
    }

    pub fn estimator_options(&self) -> EstimatorOptions {
        EstimatorOptions {
            use_covariate: self.use_covariate,
            ascm: AscmOptions {
                nu: self.nu,
                ridge_lambda: self.ridge_lambda,
                ..AscmOptions::default()
            },
            ar: ArOptions {
                outcome_lags: self.outcome_lags,
                treatment_lags: self.treatment_lags,
            },
            bootstrap_reps: self.bootstrap_reps,
            inject_failure: self.inject_failure.clone(),
            ..EstimatorOptions::default()
        }
    }
}

/// splitmix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one replicate: the master seed and each tuple component are
/// folded in turn through the splitmix64 finaliser.
pub fn derive_seed(master_seed: u64, scenario: Scenario, n_treated: usize, replicate: usize) -> u64 {
    let mut h = mix(master_seed);
    for part in [scenario.index(), n_treated as u64, replicate as u64] {
        h = mix(h ^ part);
    }
    h
}

/// Seed of an estimator's own random stream (the bootstrap) within a
/// replicate.
pub fn estimator_seed(replicate_seed: u64, estimator: EstimatorId) -> u64 {
    mix(replicate_seed ^ mix(0x5EED_0000 + estimator.index()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub scenario: Scenario,
    pub n_treated: usize,
    pub replicate: usize,
    pub adoption_years: Vec<Option<i32>>,
    pub truth: TruthTable,
    pub results: Vec<EstimatorResult>,
}

impl ReplicateResult {
    pub fn records(&self) -> Vec<ReplicateRecord> {
        self.results
            .iter()
            .flat_map(|r| ReplicateRecord::from_result(r, &self.truth, self.replicate))
            .collect()
    }
}

/// Draws a treatment schedule, applies the scenario's effects and runs
/// every configured estimator. Estimator failures are recorded in the
/// results; only an impossible design (e.g. too many treated states) is an
/// error.
pub fn run_replicate(
    config: &SimulationConfig,
    data: &PanelDataset,
    scenario: Scenario,
    n_treated: usize,
    replicate: usize,
) -> Result<ReplicateResult, HarnessError> {
    let seed = derive_seed(config.seed, scenario, n_treated, replicate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule = draw_treatment(data, n_treated, config.adoption_first..=config.adoption_last, &mut rng)?;
    let (world, truth) = apply_effects(data, &schedule, &effect_profile(scenario))?;
    let options = config.estimator_options();
    let results = config
        .estimators
        .iter()
        .map(|&id| run_estimator(id, &world, &schedule, &options, estimator_seed(seed, id)))
        .collect();
    Ok(ReplicateResult {
        scenario,
        n_treated,
        replicate,
        adoption_years: schedule.adoption_years().to_vec(),
        truth,
        results,
    })
}

/// Replicate identity in run order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReplicateKey {
    pub scenario: Scenario,
    pub n_treated: usize,
    pub replicate: usize,
}

/// All replicates of a config, ordered by scenario, then treated count,
/// then replicate index.
pub fn replicate_keys(config: &SimulationConfig) -> Vec<ReplicateKey> {
    let mut keys = Vec::new();
    for &scenario in &config.scenarios {
        for &n_treated in &config.n_treated {
            for replicate in 0..config.replicates {
                keys.push(ReplicateKey {
                    scenario,
                    n_treated,
                    replicate,
                });
            }
        }
    }
    keys
}

/// Runs the listed replicates on `threads` workers; results come back in
/// the order of `keys` whatever the scheduling.
pub fn run_replicates(
    config: &SimulationConfig,
    data: &PanelDataset,
    keys: &[ReplicateKey],
) -> Result<Vec<ReplicateResult>, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        keys.par_iter()
            .map(|k| {
                let r = run_replicate(config, data, k.scenario, k.n_treated, k.replicate);
                if k.replicate % 50 == 49 {
                    log::info!("{} n_treated={} replicate {}", k.scenario, k.n_treated, k.replicate + 1);
                }
                r
            })
            .collect()
    })
}

/// One raw-results row.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub scenario: Scenario,
    pub n_treated: usize,
    pub record: ReplicateRecord,
}

pub fn raw_rows(result: &ReplicateResult) -> Vec<RawRow> {
    result
        .records()
        .into_iter()
        .map(|record| RawRow {
            scenario: result.scenario,
            n_treated: result.n_treated,
            record,
        })
        .collect()
}

pub fn write_raw_csv(rows: &[RawRow], writer: impl Write) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RAW_HEADER)?;
    for row in rows {
        let r = &row.record;
        w.write_record([
            row.scenario.label().to_string(),
            r.estimator.label().to_string(),
            row.n_treated.to_string(),
            r.replicate.to_string(),
            r.event_time.to_string(),
            r.estimate.to_string(),
            r.se.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
            r.truth.to_string(),
            r.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_raw_csv(reader: impl Read) -> Result<Vec<RawRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().ne(RAW_HEADER) {
        return Err(HarnessError::Raw(format!(
            "expected header {}, found {}",
            RAW_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let bad = |col: usize| HarnessError::Raw(format!("row {}: bad {}", line + 1, RAW_HEADER[col]));
        let f = |col: usize| record.get(col).unwrap_or("");
        let num = |col: usize| f(col).parse::<f64>().map_err(|_| bad(col));
        rows.push(RawRow {
            scenario: f(0).parse().map_err(|_| bad(0))?,
            n_treated: f(2).parse().map_err(|_| bad(2))?,
            record: ReplicateRecord {
                estimator: f(1).parse().map_err(|_| bad(1))?,
                replicate: f(3).parse().map_err(|_| bad(3))?,
                event_time: f(4).parse().map_err(|_| bad(4))?,
                estimate: num(5)?,
                se: num(6)?,
                ci_low: num(7)?,
                ci_high: num(8)?,
                truth: num(9)?,
                converged: f(10).parse().map_err(|_| bad(10))?,
            },
        });
    }
    Ok(rows)
}

/// Metrics tables per treated count, scenarios in first-appearance order,
/// computed from raw rows in file order.
pub fn metrics_from_raw(
    rows: &[RawRow],
    outcome_sd: f64,
    summary: BiasSummary,
) -> BTreeMap<usize, MetricsTable> {
    let mut groups: BTreeMap<usize, Vec<(Scenario, Vec<ReplicateRecord>)>> = BTreeMap::new();
    for row in rows {
        let list = groups.entry(row.n_treated).or_default();
        match list.iter_mut().find(|(s, _)| *s == row.scenario) {
            Some((_, records)) => records.push(row.record.clone()),
            None => list.push((row.scenario, vec![row.record.clone()])),
        }
    }
    groups
        .into_iter()
        .map(|(n, scenarios)| {
            let mut table = MetricsTable::default();
            for (scenario, records) in scenarios {
                let part = aggregate_records(scenario, &records, outcome_sd, summary);
                table.rows.extend(part.rows);
                table.diagnostics.extend(part.diagnostics);
            }
            (n, table)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureCount {
    pub scenario: Scenario,
    pub n_treated: usize,
    pub estimator: EstimatorId,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: SimulationConfig,
    /// SHA-256 of the baseline data file.
    pub data_sha256: String,
    /// Standard deviation of the baseline outcomes (standardised-bias divisor).
    pub outcome_sd: f64,
    pub failures: Vec<FailureCount>,
    pub wall_clock_seconds: f64,
    /// File name → SHA-256 of every artifact written.
    pub checksums: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String, std::io::Error> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn failure_counts(config: &SimulationConfig, results: &[ReplicateResult]) -> Vec<FailureCount> {
    let mut counts: BTreeMap<(Scenario, usize, EstimatorId), usize> = BTreeMap::new();
    for &s in &config.scenarios {
        for &n in &config.n_treated {
            for &e in &config.estimators {
                counts.insert((s, n, e), 0);
            }
        }
    }
    for r in results {
        for e in &r.results {
            if !e.converged {
                *counts.entry((r.scenario, r.n_treated, e.estimator)).or_default() += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|((scenario, n_treated, estimator), failures)| FailureCount {
            scenario,
            n_treated,
            estimator,
            failures,
        })
        .collect()
}

/// Creates the output directory and checks it is writable.
pub fn prepare_output_dir(dir: &Path) -> Result<(), HarnessError> {
    let wrap = |source| HarnessError::Output {
        path: dir.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(wrap)?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(wrap)?;
    fs::remove_file(&probe).map_err(wrap)?;
    Ok(())
}

#[derive(Debug)]
pub struct StudyOutput {
    pub metrics: BTreeMap<usize, MetricsTable>,
    pub manifest: RunManifest,
    pub results: Vec<ReplicateResult>,
}

/// Runs every replicate of `config` on `data` and writes the raw results,
/// one metrics file per treated count and the manifest into
/// `config.output_dir`. Output bytes (other than the manifest's timing)
/// do not depend on the number of threads.
pub fn run_study(config: &SimulationConfig, data: &PanelDataset) -> Result<StudyOutput, HarnessError> {
    config.validate_for(data)?;
    let out = config.output_dir.clone();
    prepare_output_dir(&out)?;
    let started = Instant::now();

    let keys = replicate_keys(config);
    log::info!("running {} replicates on {} threads", keys.len(), config.threads);
    let results = run_replicates(config, data, &keys)?;

    let rows: Vec<RawRow> = results.iter().flat_map(raw_rows).collect();
    let raw_path = out.join(RAW_FILE);
    write_raw_csv(&rows, BufWriter::new(fs::File::create(&raw_path)?))?;
    let outcome_sd = data.outcome_sd();
    // Aggregate from the persisted rows so recomputation is byte-identical.
    let rows = read_raw_csv(fs::File::open(&raw_path)?)?;
    let metrics = metrics_from_raw(&rows, outcome_sd, config.bias_summary);

    let mut checksums = BTreeMap::new();
    checksums.insert(RAW_FILE.to_string(), sha256_file(&raw_path)?);
    for (n, table) in &metrics {
        for d in &table.diagnostics {
            log::warn!("{d}");
        }
        let name = metrics_file_name(*n);
        let path = out.join(&name);
        table.save_csv(&path)?;
        checksums.insert(name, sha256_file(&path)?);
    }
    let data_sha256 = sha256_file(&config.data).unwrap_or_default();
    let manifest = RunManifest {
        config: config.clone(),
        data_sha256,
        outcome_sd,
        failures: failure_counts(config, &results),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        checksums,
    };
    fs::write(out.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(StudyOutput {
        metrics,
        manifest,
        results,
    })
}

/// Recomputes metrics files from a raw results file, reading the outcome
/// SD and bias summary from the manifest beside it. Returns the paths
/// written (next to the raw file).
pub fn recompute_metrics(raw_path: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let dir = raw_path.parent().unwrap_or(Path::new("."));
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = RunManifest::load(&manifest_path).map_err(|e| {
        HarnessError::Raw(format!("cannot read {}: {e}", manifest_path.display()))
    })?;
    let rows = read_raw_csv(fs::File::open(raw_path)?)?;
    let metrics = metrics_from_raw(&rows, manifest.outcome_sd, manifest.config.bias_summary);
    let mut written = Vec::new();
    for (n, table) in metrics {
        let path = dir.join(metrics_file_name(n));
        table.save_csv(&path)?;
        written.push(path);
    }
    Ok(written)
}
