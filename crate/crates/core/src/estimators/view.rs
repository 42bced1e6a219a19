use nalgebra::{DMatrix, DVector};

use super::EstimatorError;
use crate::numerics::{
    absorb_two_way, cluster_robust_vcov, ols, ClusterSpec, CovarianceKind, FitResult,
};
use crate::panel::{PanelDataset, TreatmentSchedule};

/// Dense balanced panel used inside the estimators. Units are indexed
/// `0..n_units`, years `0..n_years`; values are unit-major.
#[derive(Debug, Clone)]
pub(crate) struct PanelView {
    pub n_units: usize,
    pub n_years: usize,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    /// Year index of adoption, `None` for never-treated units.
    pub adoption: Vec<Option<usize>>,
}

impl PanelView {
    pub fn new(data: &PanelDataset, schedule: &TreatmentSchedule) -> Result<Self, EstimatorError> {
        data.require_balanced()?;
        if schedule.states() != data.states() {
            return Err(EstimatorError::Design("schedule does not match the panel's states".into()));
        }
        let first = data.first_year();
        let adoption = schedule
            .adoption_years()
            .iter()
            .map(|a| a.map(|y| (y - first) as usize))
            .collect();
        Ok(Self {
            n_units: data.n_states(),
            n_years: data.n_years(),
            y: data.outcomes(),
            x: data.covariates(),
            adoption,
        })
    }

    #[inline]
    pub fn idx(&self, unit: usize, year: usize) -> usize {
        unit * self.n_years + year
    }

    /// First treated year is event time 1.
    #[inline]
    pub fn event_time(&self, unit: usize, year: usize) -> Option<i32> {
        self.adoption[unit].map(|a| year as i32 - a as i32 + 1)
    }

    #[inline]
    pub fn is_treated(&self, unit: usize, year: usize) -> bool {
        self.adoption[unit].is_some_and(|a| year >= a)
    }

    pub fn never_treated(&self) -> Vec<usize> {
        (0..self.n_units).filter(|&u| self.adoption[u].is_none()).collect()
    }

    pub fn treated_units(&self) -> Vec<usize> {
        (0..self.n_units).filter(|&u| self.adoption[u].is_some()).collect()
    }

    /// Adoption-year cohorts `(year index, members)`, ascending.
    pub fn cohorts(&self) -> Vec<(usize, Vec<usize>)> {
        let mut map = std::collections::BTreeMap::<usize, Vec<usize>>::new();
        for (u, a) in self.adoption.iter().enumerate() {
            if let Some(a) = a {
                map.entry(*a).or_default().push(u);
            }
        }
        map.into_iter().collect()
    }

    /// A panel made of the listed units (repeats allowed, each copy a
    /// distinct unit).
    pub fn resample(&self, units: &[usize]) -> Self {
        let mut y = Vec::with_capacity(units.len() * self.n_years);
        let mut x = Vec::with_capacity(units.len() * self.n_years);
        for &u in units {
            let r = self.idx(u, 0)..self.idx(u, 0) + self.n_years;
            y.extend_from_slice(&self.y[r.clone()]);
            x.extend_from_slice(&self.x[r]);
        }
        Self {
            n_units: units.len(),
            n_years: self.n_years,
            y,
            x,
            adoption: units.iter().map(|&u| self.adoption[u]).collect(),
        }
    }

    pub fn require_controls(&self) -> Result<(), EstimatorError> {
        if self.adoption.iter().all(Option::is_some) {
            return Err(EstimatorError::Design("no never-treated states".into()));
        }
        if self.adoption.iter().all(Option::is_none) {
            return Err(EstimatorError::Design("no treated states".into()));
        }
        Ok(())
    }
}

/// Two-way fixed-effect regression of the outcome on indicator columns
/// (`column(unit, year)` names the single active indicator, if any) plus
/// optionally the covariate, with a state-clustered covariance.
pub(crate) struct TwfeFit {
    pub fit: FitResult,
    pub vcov: DMatrix<f64>,
}

pub(crate) fn twfe_indicators(
    view: &PanelView,
    n_indicators: usize,
    column: impl Fn(usize, usize) -> Option<usize>,
    use_covariate: bool,
    covariance: CovarianceKind,
) -> Result<TwfeFit, EstimatorError> {
    let n = view.n_units * view.n_years;
    let p = n_indicators + usize::from(use_covariate);
    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut units = Vec::with_capacity(n);
    let mut times = Vec::with_capacity(n);
    for u in 0..view.n_units {
        for t in 0..view.n_years {
            let i = view.idx(u, t);
            units.push(u);
            times.push(t);
            if let Some(c) = column(u, t) {
                x[(i, c)] = 1.0;
            }
            if use_covariate {
                x[(i, n_indicators)] = view.x[i];
            }
        }
    }
    let y = DMatrix::from_column_slice(n, 1, &view.y);
    let y_tilde = absorb_two_way(&y, &units, &times)?;
    let x_tilde = absorb_two_way(&x, &units, &times)?;
    let y_tilde = DVector::from_column_slice(y_tilde.as_slice());
    let fit = ols(&x_tilde, &y_tilde, None)?;
    let clusters = ClusterSpec::new(&units);
    // Unit effects are nested in the state clusters; year effects count.
    let vcov = cluster_robust_vcov(&fit, &x_tilde, &clusters, covariance, view.n_years.saturating_sub(1))?;
    Ok(TwfeFit { fit, vcov })
}
