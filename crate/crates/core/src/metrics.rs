//! Performance metrics over simulation replicates and their aggregation
//! into per-(estimator, event time) tables.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dgp::{Scenario, TruthTable, EFFECT_YEARS};
use crate::estimators::{EstimatorId, EstimatorResult};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no estimates")]
    Empty,
    #[error("need at least {needed} estimates, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("interval {index} has low {low} > high {high}")]
    InvalidInterval { index: usize, low: f64, high: f64 },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn non_empty(estimates: &[f64]) -> Result<f64, MetricsError> {
    if estimates.is_empty() {
        Err(MetricsError::Empty)
    } else {
        Ok(estimates.len() as f64)
    }
}

/// Mean absolute error `Σ|α̂ − α| / N`.
pub fn abs_bias(estimates: &[f64], truth: f64) -> Result<f64, MetricsError> {
    let n = non_empty(estimates)?;
    Ok(estimates.iter().map(|e| (e - truth).abs()).sum::<f64>() / n)
}

/// Median absolute error.
pub fn median_abs_bias(estimates: &[f64], truth: f64) -> Result<f64, MetricsError> {
    non_empty(estimates)?;
    let mut errors: Vec<f64> = estimates.iter().map(|e| (e - truth).abs()).collect();
    errors.sort_by(f64::total_cmp);
    let m = errors.len() / 2;
    Ok(if errors.len() % 2 == 1 {
        errors[m]
    } else {
        (errors[m - 1] + errors[m]) / 2.0
    })
}

/// Standard deviation with the population denominator `N`.
pub fn empirical_se(estimates: &[f64]) -> Result<f64, MetricsError> {
    if estimates.len() < 2 {
        return Err(MetricsError::TooFew {
            needed: 2,
            got: estimates.len(),
        });
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    Ok((estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt())
}

/// Share of closed intervals `[low, high]` containing `truth`.
pub fn coverage(intervals: &[(f64, f64)], truth: f64) -> Result<f64, MetricsError> {
    if intervals.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut hits = 0usize;
    for (index, &(low, high)) in intervals.iter().enumerate() {
        if low > high {
            return Err(MetricsError::InvalidInterval { index, low, high });
        }
        if low <= truth && truth <= high {
            hits += 1;
        }
    }
    Ok(hits as f64 / intervals.len() as f64)
}

/// `sqrt(Σ(α̂ − α)² / N)`.
pub fn rmse(estimates: &[f64], truth: f64) -> Result<f64, MetricsError> {
    let n = non_empty(estimates)?;
    Ok((estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / n).sqrt())
}

/// `mean(α̂) − α`.
pub fn mean_error(estimates: &[f64], truth: f64) -> Result<f64, MetricsError> {
    let n = non_empty(estimates)?;
    Ok(estimates.iter().sum::<f64>() / n - truth)
}

/// How absolute errors are summarised across replicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasSummary {
    #[default]
    Mean,
    Median,
}

/// One replicate's estimate at one event time, as persisted in the raw
/// results file.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub estimator: EstimatorId,
    pub replicate: usize,
    pub event_time: i32,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub truth: f64,
    pub converged: bool,
}

impl ReplicateRecord {
    /// Rows for every post-adoption event time 1..5 of one estimator run
    /// (missing effects become NaN rows), plus any anticipation placebos
    /// with truth 0.
    pub fn from_result(result: &EstimatorResult, truth: &TruthTable, replicate: usize) -> Vec<Self> {
        let mut rows: Vec<Self> = result
            .effects
            .iter()
            .filter(|e| e.event_time < 0)
            .map(|e| Self {
                estimator: result.estimator,
                replicate,
                event_time: e.event_time,
                estimate: e.estimate,
                se: e.se,
                ci_low: e.ci_low,
                ci_high: e.ci_high,
                truth: 0.0,
                converged: result.converged,
            })
            .collect();
        for j in 1..=EFFECT_YEARS as i32 {
            let (estimate, se, ci_low, ci_high) = match result.effect(j) {
                Some(e) => (e.estimate, e.se, e.ci_low, e.ci_high),
                None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
            };
            rows.push(Self {
                estimator: result.estimator,
                replicate,
                event_time: j,
                estimate,
                se,
                ci_low,
                ci_high,
                truth: truth.at_event_time(j).unwrap_or(f64::NAN),
                converged: result.converged && estimate.is_finite(),
            });
        }
        rows
    }

    fn usable(&self) -> bool {
        self.converged && self.estimate.is_finite() && self.truth.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scenario: Scenario,
    pub estimator: EstimatorId,
    pub event_time: i32,
    pub abs_bias: Option<f64>,
    pub std_abs_bias: Option<f64>,
    pub emp_se: Option<f64>,
    pub coverage: Option<f64>,
    pub rmse: Option<f64>,
    /// Converged replicates entering the row.
    pub n_effective: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
    pub diagnostics: Vec<String>,
}

pub const METRICS_HEADER: [&str; 9] = [
    "scenario",
    "estimator",
    "event_time",
    "abs_bias",
    "std_abs_bias",
    "emp_se",
    "coverage",
    "rmse",
    "n_effective",
];

/// Metrics for every `(estimator, event time 1..5)` cell of one scenario.
///
/// Non-converged replicates are left out of a cell. The standardised bias
/// divides by `outcome_sd`, the standard deviation of the untreated
/// outcomes across all state-years. Placebo rows (negative event times)
/// are ignored.
pub fn aggregate_records(
    scenario: Scenario,
    records: &[ReplicateRecord],
    outcome_sd: f64,
    summary: BiasSummary,
) -> MetricsTable {
    let mut cells: BTreeMap<(EstimatorId, i32), Vec<&ReplicateRecord>> = BTreeMap::new();
    for r in records {
        if (1..=EFFECT_YEARS as i32).contains(&r.event_time) {
            cells.entry((r.estimator, r.event_time)).or_default().push(r);
        }
    }
    let mut table = MetricsTable::default();
    for ((estimator, event_time), rows) in cells {
        let used: Vec<&ReplicateRecord> = rows.into_iter().filter(|r| r.usable()).collect();
        let mut row = MetricsRow {
            scenario,
            estimator,
            event_time,
            abs_bias: None,
            std_abs_bias: None,
            emp_se: None,
            coverage: None,
            rmse: None,
            n_effective: used.len(),
        };
        if used.is_empty() {
            table
                .diagnostics
                .push(format!("{scenario} {estimator} event time {event_time}: no converged replicates"));
            table.rows.push(row);
            continue;
        }
        // Replicates of one cell share the truth up to treated-set draws;
        // errors are taken against each replicate's own truth.
        let errors: Vec<f64> = used.iter().map(|r| r.estimate - r.truth).collect();
        let bias = match summary {
            BiasSummary::Mean => abs_bias(&errors, 0.0),
            BiasSummary::Median => median_abs_bias(&errors, 0.0),
        }
        .ok();
        row.abs_bias = bias;
        row.std_abs_bias = bias.map(|b| b / outcome_sd).filter(|v| v.is_finite());
        let estimates: Vec<f64> = used.iter().map(|r| r.estimate).collect();
        row.emp_se = empirical_se(&estimates).ok();
        if row.emp_se.is_none() {
            table
                .diagnostics
                .push(format!("{scenario} {estimator} event time {event_time}: empirical SE undefined"));
        }
        let intervals: Vec<(f64, f64)> = used
            .iter()
            .filter(|r| r.ci_low.is_finite() && r.ci_high.is_finite())
            .map(|r| (r.ci_low, r.ci_high))
            .collect();
        row.coverage = if intervals.len() == used.len() {
            let hits = used.iter().filter(|r| r.ci_low <= r.truth && r.truth <= r.ci_high).count();
            Some(hits as f64 / used.len() as f64)
        } else {
            None
        };
        row.rmse = rmse(&errors, 0.0).ok();
        table.rows.push(row);
    }
    table
}

/// [`aggregate_records`] over in-memory replicate results.
pub fn aggregate(
    scenario: Scenario,
    replicates: &[(Vec<EstimatorResult>, TruthTable)],
    outcome_sd: f64,
    summary: BiasSummary,
) -> MetricsTable {
    let records: Vec<ReplicateRecord> = replicates
        .iter()
        .enumerate()
        .flat_map(|(i, (results, truth))| {
            results
                .iter()
                .flat_map(move |r| ReplicateRecord::from_result(r, truth, i))
        })
        .collect();
    aggregate_records(scenario, &records, outcome_sd, summary)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsTable {
    pub fn write_csv(&self, writer: impl Write) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(METRICS_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.scenario.label().to_string(),
                r.estimator.label().to_string(),
                r.event_time.to_string(),
                fmt_opt(r.abs_bias),
                fmt_opt(r.std_abs_bias),
                fmt_opt(r.emp_se),
                fmt_opt(r.coverage),
                fmt_opt(r.rmse),
                r.n_effective.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), MetricsError> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv(reader: impl Read) -> Result<Self, MetricsError> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let mut index = Vec::with_capacity(METRICS_HEADER.len());
        for name in METRICS_HEADER {
            let i = headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| MetricsError::Format(format!("missing column `{name}`")))?;
            index.push(i);
        }
        let mut rows = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let field = |k: usize| record.get(index[k]).unwrap_or("").trim();
            let bad = |what: &str| MetricsError::Format(format!("row {}: bad {what}", line + 1));
            let opt = |k: usize| -> Result<Option<f64>, MetricsError> {
                let s = field(k);
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad(METRICS_HEADER[k]))
                }
            };
            rows.push(MetricsRow {
                scenario: field(0).parse().map_err(|_| bad("scenario"))?,
                estimator: field(1).parse().map_err(|_| bad("estimator"))?,
                event_time: field(2).parse().map_err(|_| bad("event_time"))?,
                abs_bias: opt(3)?,
                std_abs_bias: opt(4)?,
                emp_se: opt(5)?,
                coverage: opt(6)?,
                rmse: opt(7)?,
                n_effective: field(8).parse().map_err(|_| bad("n_effective"))?,
            });
        }
        Ok(Self {
            rows,
            diagnostics: Vec::new(),
        })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, MetricsError> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    /// Rows of one estimator.
    pub fn estimator_rows(&self, estimator: EstimatorId) -> impl Iterator<Item = &MetricsRow> {
        self.rows.iter().filter(move |r| r.estimator == estimator)
    }
}
