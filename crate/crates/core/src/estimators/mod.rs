//! The seven time-varying policy-effect estimators.
//!
//! Every estimator maps a balanced panel and its treatment schedule to an
//! [`EstimatorResult`] over post-adoption event times 1..5. Event time 0 (the
//! last untreated year) is the reference period and is never reported. The
//! two event-study regressions also report anticipation placebos at
//! negative event times.

mod ar_debiased;
mod ascm;
mod bootstrap;
mod callaway_santanna;
mod event_study;
mod imputation;
mod sun_abraham;
mod two_stage;
mod view;

pub use ar_debiased::ar_debiased;
pub use ascm::ascm_staggered;
pub use callaway_santanna::did_staggered_cs;
pub use event_study::did_event_study;
pub use imputation::did_imputation;
pub use sun_abraham::{did_interaction_weighted, CohortTable};
pub use two_stage::did_two_stage;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dgp::EFFECT_YEARS;
use crate::numerics::{CovarianceKind, NumericError};
use crate::panel::{EventWindow, PanelDataset, PanelError, TreatmentSchedule};

/// Two-sided 95% normal critical value.
pub const Z_95: f64 = 1.959964;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("design error: {0}")]
    Design(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum EstimatorId {
    DidEs,
    ArDb,
    Ascm,
    DidSa,
    DidHt,
    Did2s,
    DidImp,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 7] = [
        EstimatorId::DidEs,
        EstimatorId::ArDb,
        EstimatorId::Ascm,
        EstimatorId::DidSa,
        EstimatorId::DidHt,
        EstimatorId::Did2s,
        EstimatorId::DidImp,
    ];

    /// The difference-in-differences family.
    pub const DID_FAMILY: [EstimatorId; 5] = [
        EstimatorId::DidEs,
        EstimatorId::DidSa,
        EstimatorId::DidHt,
        EstimatorId::Did2s,
        EstimatorId::DidImp,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EstimatorId::DidEs => "DID-ES",
            EstimatorId::ArDb => "AR-DB",
            EstimatorId::Ascm => "ASCM",
            EstimatorId::DidSa => "DID-SA",
            EstimatorId::DidHt => "DID-HT",
            EstimatorId::Did2s => "DID-2S",
            EstimatorId::DidImp => "DID-IMP",
        }
    }

    pub fn index(self) -> u64 {
        Self::ALL.iter().position(|&e| e == self).unwrap_or(0) as u64
    }

    pub fn is_did(self) -> bool {
        Self::DID_FAMILY.contains(&self)
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl From<EstimatorId> for String {
    fn from(e: EstimatorId) -> String {
        e.label().to_string()
    }
}

impl TryFrom<String> for EstimatorId {
    type Error = EstimatorError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for EstimatorId {
    type Err = EstimatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_uppercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|e| e.label() == norm || e.label().replace('-', "") == norm)
            .ok_or_else(|| {
                EstimatorError::Design(format!(
                    "unknown estimator `{s}` (expected one of {})",
                    Self::ALL.map(|e| e.label()).join(", ")
                ))
            })
    }
}

/// One event-time estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventEffect {
    pub event_time: i32,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl EventEffect {
    pub fn new(event_time: i32, estimate: f64, se: f64) -> Self {
        Self {
            event_time,
            estimate,
            se,
            ci_low: estimate - Z_95 * se,
            ci_high: estimate + Z_95 * se,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResult {
    pub estimator: EstimatorId,
    /// Sorted by event time.
    pub effects: Vec<EventEffect>,
    pub converged: bool,
    pub diagnostics: Vec<String>,
}

impl EstimatorResult {
    pub(crate) fn new(estimator: EstimatorId, mut effects: Vec<EventEffect>, diagnostics: Vec<String>) -> Self {
        effects.sort_by_key(|e| e.event_time);
        let converged = effects
            .iter()
            .filter(|e| e.event_time >= 1)
            .all(|e| e.estimate.is_finite() && e.se.is_finite());
        Self {
            estimator,
            effects,
            converged,
            diagnostics,
        }
    }

    pub fn failed(estimator: EstimatorId, reason: impl Into<String>) -> Self {
        Self {
            estimator,
            effects: Vec::new(),
            converged: false,
            diagnostics: vec![reason.into()],
        }
    }

    pub fn effect(&self, event_time: i32) -> Option<&EventEffect> {
        self.effects.iter().find(|e| e.event_time == event_time)
    }

    /// Post-adoption effects 1..5.
    pub fn post_effects(&self) -> impl Iterator<Item = &EventEffect> {
        self.effects
            .iter()
            .filter(|e| (1..=EFFECT_YEARS as i32).contains(&e.event_time))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscmOptions {
    /// Weight on the pooled (average-unit) imbalance, in [0, 1].
    pub nu: f64,
    /// Ridge penalty of the augmentation regression, relative to
    /// standardised predictors.
    pub ridge_lambda: f64,
    pub weight_tolerance: f64,
}

impl Default for AscmOptions {
    fn default() -> Self {
        Self {
            nu: 0.5,
            ridge_lambda: 1.0,
            weight_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArOptions {
    pub outcome_lags: usize,
    pub treatment_lags: usize,
}

impl Default for ArOptions {
    fn default() -> Self {
        Self {
            outcome_lags: 1,
            treatment_lags: 5,
        }
    }
}

/// Uncertainty strategy of the two imputation-style estimators. Only the
/// clustered bootstrap is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ImputationVariance {
    #[default]
    ClusterBootstrap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOptions {
    /// Event-study window; `None` spans the whole panel (no binning).
    pub window: Option<EventWindow>,
    pub use_covariate: bool,
    pub covariance: CovarianceKind,
    pub ascm: AscmOptions,
    pub ar: ArOptions,
    pub bootstrap_reps: usize,
    pub imputation_variance: ImputationVariance,
    /// Estimators forced to fail, for exercising failure accounting.
    #[doc(hidden)]
    pub inject_failure: Vec<EstimatorId>,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            window: None,
            use_covariate: true,
            covariance: CovarianceKind::Cr1,
            ascm: AscmOptions::default(),
            ar: ArOptions::default(),
            bootstrap_reps: 200,
            imputation_variance: ImputationVariance::ClusterBootstrap,
            inject_failure: Vec::new(),
        }
    }
}

impl EstimatorOptions {
    pub fn window_for(&self, data: &PanelDataset) -> EventWindow {
        self.window.unwrap_or_else(|| EventWindow::spanning(data))
    }
}

/// Runs one estimator, turning any error into a flagged result.
/// `seed` drives the bootstrap draws of the imputation estimators.
pub fn run_estimator(
    id: EstimatorId,
    data: &PanelDataset,
    schedule: &TreatmentSchedule,
    options: &EstimatorOptions,
    seed: u64,
) -> EstimatorResult {
    if options.inject_failure.contains(&id) {
        return EstimatorResult::failed(id, "injected failure");
    }
    let window = options.window_for(data);
    let outcome = match id {
        EstimatorId::DidEs => did_event_study(data, schedule, window, options),
        EstimatorId::ArDb => ar_debiased(data, schedule, options),
        EstimatorId::Ascm => ascm_staggered(data, schedule, options),
        EstimatorId::DidSa => did_staggered_cs(data, schedule, options),
        EstimatorId::DidHt => did_interaction_weighted(data, schedule, window, options),
        EstimatorId::Did2s => did_two_stage(data, schedule, window, options, seed),
        EstimatorId::DidImp => did_imputation(data, schedule, options, seed),
    };
    outcome.unwrap_or_else(|e| EstimatorResult::failed(id, e.to_string()))
}
