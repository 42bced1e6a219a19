//! State-year panel data model, CSV ingestion, validation and event-time
//! bookkeeping.
//!
//! A [`PanelDataset`] keeps its observations sorted by `(state, year)`. When
//! the panel is balanced the observation for state index `s` and year index
//! `t` lives at `s * n_years + t`, which is the layout every estimator relies
//! on.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

/// Column names of the input schema.
pub const STATE_COLUMN: &str = "state";
pub const YEAR_COLUMN: &str = "year";
pub const OUTCOME_COLUMN: &str = "crude_rate";
pub const COVARIATE_COLUMN: &str = "unemployment_rate";

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("row {row}: cannot parse {column} value `{value}`")]
    Parse {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("row {row}: duplicate observation for ({state}, {year})")]
    Duplicate { row: usize, state: String, year: i32 },
    #[error("no observations")]
    Empty,
    #[error("panel failed validation: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("panel is not balanced")]
    Unbalanced,
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("invalid event window: {0}")]
    Window(String),
}

pub type StateId = String;

/// One state-year record.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelObservation {
    pub state: StateId,
    pub year: i32,
    /// Overdose deaths per 100,000 residents.
    pub outcome: f64,
    /// Unemployment rate per 100 residents.
    pub covariate: f64,
    pub treated: bool,
}

/// A state-year panel. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    observations: Vec<PanelObservation>,
    states: Vec<StateId>,
    years: Vec<i32>,
}

impl PanelDataset {
    /// Builds a dataset from raw observations without validating them.
    ///
    /// Observations are sorted by `(state, year)`. The year axis spans the
    /// minimum to maximum year present, so gaps show up in
    /// [`validate_panel`] rather than being silently dropped.
    pub fn from_observations(mut observations: Vec<PanelObservation>) -> Self {
        observations.sort_by(|a, b| a.state.cmp(&b.state).then(a.year.cmp(&b.year)));
        let states: Vec<StateId> = observations
            .iter()
            .map(|o| o.state.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let years = match (
            observations.iter().map(|o| o.year).min(),
            observations.iter().map(|o| o.year).max(),
        ) {
            (Some(lo), Some(hi)) => (lo..=hi).collect(),
            _ => Vec::new(),
        };
        Self {
            observations,
            states,
            years,
        }
    }

    pub fn observations(&self) -> &[PanelObservation] {
        &self.observations
    }

    pub fn states(&self) -> &[StateId] {
        &self.states
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn first_year(&self) -> i32 {
        self.years.first().copied().unwrap_or(0)
    }

    pub fn last_year(&self) -> i32 {
        self.years.last().copied().unwrap_or(0)
    }

    pub fn is_balanced(&self) -> bool {
        !self.observations.is_empty()
            && self.observations.len() == self.states.len() * self.years.len()
            && self.observations.iter().enumerate().all(|(i, o)| {
                o.state == self.states[i / self.years.len()]
                    && o.year == self.years[i % self.years.len()]
            })
    }

    pub fn require_balanced(&self) -> Result<(), PanelError> {
        if self.is_balanced() {
            Ok(())
        } else {
            Err(PanelError::Unbalanced)
        }
    }

    pub fn state_index(&self, state: &str) -> Option<usize> {
        self.states.binary_search_by(|s| s.as_str().cmp(state)).ok()
    }

    /// Observation at `(state index, year index)` in a balanced panel.
    pub fn at(&self, state: usize, year: usize) -> &PanelObservation {
        &self.observations[state * self.years.len() + year]
    }

    /// Outcomes laid out state-major (`s * n_years + t`).
    pub fn outcomes(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.outcome).collect()
    }

    pub fn covariates(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.covariate).collect()
    }

    /// Returns a copy with every outcome replaced by `f(observation)`.
    pub fn map_outcomes(&self, mut f: impl FnMut(&PanelObservation) -> f64) -> Self {
        let observations = self
            .observations
            .iter()
            .map(|o| PanelObservation {
                outcome: f(o),
                ..o.clone()
            })
            .collect();
        Self {
            observations,
            states: self.states.clone(),
            years: self.years.clone(),
        }
    }

    pub(crate) fn with_observations(&self, observations: Vec<PanelObservation>) -> Self {
        debug_assert_eq!(observations.len(), self.observations.len());
        Self {
            observations,
            states: self.states.clone(),
            years: self.years.clone(),
        }
    }

    /// Population standard deviation of all outcomes.
    pub fn outcome_sd(&self) -> f64 {
        let n = self.observations.len() as f64;
        if n == 0.0 {
            return f64::NAN;
        }
        let mean = self.observations.iter().map(|o| o.outcome).sum::<f64>() / n;
        let ss = self
            .observations
            .iter()
            .map(|o| (o.outcome - mean).powi(2))
            .sum::<f64>();
        (ss / n).sqrt()
    }
}

/// Findings from [`validate_panel`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub ok: bool,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return write!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks balance, sign constraints, year contiguity and absorbing
/// treatment. Findings are returned as data, never as an error.
pub fn validate_panel(data: &PanelDataset) -> ValidationReport {
    let mut violations = Vec::new();
    if data.observations.is_empty() {
        violations.push("no observations".to_string());
    }

    let mut by_state: BTreeMap<&str, Vec<&PanelObservation>> = BTreeMap::new();
    for o in &data.observations {
        by_state.entry(o.state.as_str()).or_default().push(o);
    }

    let present_years: BTreeSet<i32> = data.observations.iter().map(|o| o.year).collect();
    for y in data.years() {
        if !present_years.contains(y) {
            violations.push(format!("year gap: no observations for {y}"));
        }
    }

    for (state, rows) in &by_state {
        let mut seen = BTreeSet::new();
        for o in rows {
            if !seen.insert(o.year) {
                violations.push(format!("duplicate: {state} has multiple rows for {}", o.year));
            }
        }
        for y in data.years() {
            if present_years.contains(y) && !seen.contains(y) {
                violations.push(format!("unbalanced: {state} missing {y}"));
            }
        }
        let mut was_treated = false;
        for o in rows {
            if was_treated && !o.treated {
                violations.push(format!(
                    "non-absorbing treatment: {state} untreated in {} after adoption",
                    o.year
                ));
            }
            was_treated |= o.treated;
        }
    }

    for o in &data.observations {
        if !o.outcome.is_finite() || o.outcome < 0.0 {
            violations.push(format!(
                "negative outcome: {} {} has {}",
                o.state, o.year, o.outcome
            ));
        }
        if !o.covariate.is_finite() || o.covariate < 0.0 {
            violations.push(format!(
                "negative covariate: {} {} has {}",
                o.state, o.year, o.covariate
            ));
        }
    }

    let ok = violations.is_empty();
    ValidationReport { violations, ok }
}

/// Reads a panel from CSV with columns `state,year,crude_rate,unemployment_rate`.
///
/// An optional `treated` column (0/1 or true/false) is honoured; any other
/// extra column is ignored with a warning.
pub fn load_panel_csv(path: impl AsRef<Path>) -> Result<PanelDataset, PanelError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| PanelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_panel_csv(file)
}

pub fn read_panel_csv(reader: impl Read) -> Result<PanelDataset, PanelError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &'static str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(PanelError::MissingColumn(name))
    };
    let state_col = find(STATE_COLUMN)?;
    let year_col = find(YEAR_COLUMN)?;
    let outcome_col = find(OUTCOME_COLUMN)?;
    let covariate_col = find(COVARIATE_COLUMN)?;
    let treated_col = headers.iter().position(|h| h == "treated");
    for h in headers.iter() {
        if ![STATE_COLUMN, YEAR_COLUMN, OUTCOME_COLUMN, COVARIATE_COLUMN, "treated"].contains(&h) {
            log::warn!("ignoring extra column `{h}`");
        }
    }

    let mut observations = Vec::new();
    let mut seen: HashMap<(String, i32), usize> = HashMap::new();
    for (i, record) in rdr.records().enumerate() {
        // Row numbers count the header as row 1.
        let row = i + 2;
        let record = record?;
        let field = |col: usize| record.get(col).unwrap_or("");
        let state = field(state_col).to_string();
        if state.is_empty() {
            return Err(PanelError::Parse {
                row,
                column: STATE_COLUMN,
                value: state,
            });
        }
        let year: i32 = field(year_col).parse().map_err(|_| PanelError::Parse {
            row,
            column: YEAR_COLUMN,
            value: field(year_col).to_string(),
        })?;
        let outcome = parse_real(field(outcome_col), row, OUTCOME_COLUMN)?;
        let covariate = parse_real(field(covariate_col), row, COVARIATE_COLUMN)?;
        let treated = match treated_col.map(field) {
            None => false,
            Some("1") | Some("true") | Some("TRUE") => true,
            Some("0") | Some("false") | Some("FALSE") => false,
            Some(other) => {
                return Err(PanelError::Parse {
                    row,
                    column: "treated",
                    value: other.to_string(),
                })
            }
        };
        if seen.insert((state.clone(), year), row).is_some() {
            return Err(PanelError::Duplicate { row, state, year });
        }
        observations.push(PanelObservation {
            state,
            year,
            outcome,
            covariate,
            treated,
        });
    }
    if observations.is_empty() {
        return Err(PanelError::Empty);
    }
    let data = PanelDataset::from_observations(observations);
    let report = validate_panel(&data);
    if !report.ok {
        return Err(PanelError::Invalid(report.violations));
    }
    Ok(data)
}

fn parse_real(value: &str, row: usize, column: &'static str) -> Result<f64, PanelError> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| PanelError::Parse {
            row,
            column,
            value: value.to_string(),
        })
}

/// Writes the panel in the input schema plus a `treated` column.
pub fn write_panel_csv(data: &PanelDataset, writer: impl Write) -> Result<(), PanelError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([STATE_COLUMN, YEAR_COLUMN, OUTCOME_COLUMN, COVARIATE_COLUMN, "treated"])?;
    for o in &data.observations {
        w.write_record([
            o.state.clone(),
            o.year.to_string(),
            o.outcome.to_string(),
            o.covariate.to_string(),
            u8::from(o.treated).to_string(),
        ])?;
    }
    w.flush().map_err(|source| PanelError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

pub fn save_panel_csv(data: &PanelDataset, path: impl AsRef<Path>) -> Result<(), PanelError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| PanelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_panel_csv(data, std::io::BufWriter::new(file))
}

/// Adoption year per state, aligned with a dataset's state ordering.
/// `None` marks a never-treated state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreatmentSchedule {
    states: Vec<StateId>,
    adoption: Vec<Option<i32>>,
}

impl TreatmentSchedule {
    /// Builds a schedule for `data` from a state → adoption-year map. States
    /// absent from the map are never treated.
    pub fn new(data: &PanelDataset, adoptions: &BTreeMap<StateId, i32>) -> Result<Self, PanelError> {
        for state in adoptions.keys() {
            if data.state_index(state).is_none() {
                return Err(PanelError::UnknownState(state.clone()));
            }
        }
        let adoption = data
            .states()
            .iter()
            .map(|s| adoptions.get(s).copied())
            .collect();
        Self::from_parts(data, adoption)
    }

    /// Builds a schedule from a vector aligned with `data.states()`.
    pub fn from_parts(data: &PanelDataset, adoption: Vec<Option<i32>>) -> Result<Self, PanelError> {
        if adoption.len() != data.n_states() {
            return Err(PanelError::Schedule(format!(
                "{} entries for {} states",
                adoption.len(),
                data.n_states()
            )));
        }
        for (s, a) in data.states().iter().zip(&adoption) {
            if let Some(year) = a {
                if *year < data.first_year() || *year > data.last_year() {
                    return Err(PanelError::Schedule(format!(
                        "{s} adopts in {year}, outside {}-{}",
                        data.first_year(),
                        data.last_year()
                    )));
                }
            }
        }
        if adoption.iter().all(Option::is_some) {
            return Err(PanelError::Schedule("no never-treated states".into()));
        }
        Ok(Self {
            states: data.states().to_vec(),
            adoption,
        })
    }

    /// Reads adoption years off the `treated` flags of a panel.
    pub fn from_treated_flags(data: &PanelDataset) -> Result<Self, PanelError> {
        data.require_balanced()?;
        let adoption = (0..data.n_states())
            .map(|s| {
                (0..data.n_years())
                    .map(|t| data.at(s, t))
                    .find(|o| o.treated)
                    .map(|o| o.year)
            })
            .collect();
        Self::from_parts(data, adoption)
    }

    pub fn states(&self) -> &[StateId] {
        &self.states
    }

    /// Adoption years aligned with the dataset's state order.
    pub fn adoption_years(&self) -> &[Option<i32>] {
        &self.adoption
    }

    pub fn adoption_year(&self, state: &str) -> Result<Option<i32>, PanelError> {
        self.states
            .binary_search_by(|s| s.as_str().cmp(state))
            .map(|i| self.adoption[i])
            .map_err(|_| PanelError::UnknownState(state.to_string()))
    }

    pub fn n_treated(&self) -> usize {
        self.adoption.iter().filter(|a| a.is_some()).count()
    }

    /// Event time of `(state index, year)`; see [`event_time`].
    pub fn event_time_at(&self, state: usize, year: i32) -> Option<i32> {
        self.adoption[state].map(|a| year - a + 1)
    }

    /// Whether the policy is in effect for `(state index, year)`.
    pub fn is_treated(&self, state: usize, year: i32) -> bool {
        self.adoption[state].is_some_and(|a| year >= a)
    }

    /// Distinct adoption years, ascending.
    pub fn cohorts(&self) -> Vec<i32> {
        self.adoption
            .iter()
            .flatten()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

/// Periods relative to adoption: the first treated year is event time 1,
/// the year before adoption is 0. Never-treated states have no event time.
pub fn event_time(
    state: &str,
    year: i32,
    schedule: &TreatmentSchedule,
) -> Result<Option<i32>, PanelError> {
    Ok(schedule.adoption_year(state)?.map(|a| year - a + 1))
}

/// Event-time range kept as separate coefficients. Event times below
/// `min_lead` are binned into `min_lead`, above `max_lag` into `max_lag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EventWindow {
    pub min_lead: i32,
    pub max_lag: i32,
}

impl EventWindow {
    pub fn new(min_lead: i32, max_lag: i32) -> Result<Self, PanelError> {
        if min_lead >= -1 {
            return Err(PanelError::Window(format!("min_lead {min_lead} must be below -1")));
        }
        if max_lag < 5 {
            return Err(PanelError::Window(format!("max_lag {max_lag} must be at least 5")));
        }
        Ok(Self { min_lead, max_lag })
    }

    /// A window wide enough that no event time in `data` is binned.
    pub fn spanning(data: &PanelDataset) -> Self {
        let span = data.n_years() as i32;
        Self {
            min_lead: (-span).min(-2),
            max_lag: span.max(5),
        }
    }

    pub fn clamp(&self, event_time: i32) -> i32 {
        event_time.clamp(self.min_lead, self.max_lag)
    }
}
