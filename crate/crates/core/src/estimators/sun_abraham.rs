//! Interaction-weighted event study: cohort × event-time interactions,
//! aggregated with cohort shares.

use std::collections::BTreeMap;

use nalgebra::DVector;

use super::view::{twfe_indicators, PanelView};
use super::{EstimatorError, EstimatorId, EstimatorOptions, EstimatorResult, EventEffect};
use crate::dgp::EFFECT_YEARS;
use crate::numerics::FitResult;
use crate::panel::{EventWindow, PanelDataset, TreatmentSchedule};

/// Adoption cohorts and their shares of treated observations at each
/// (binned) event time.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortTable {
    /// Adoption year and member state indices, ascending by year.
    pub cohorts: Vec<(i32, Vec<usize>)>,
    /// Event time → `(cohort index, share)`; shares sum to one.
    pub shares: BTreeMap<i32, Vec<(usize, f64)>>,
}

impl CohortTable {
    pub fn new(
        data: &PanelDataset,
        schedule: &TreatmentSchedule,
        window: EventWindow,
    ) -> Result<Self, EstimatorError> {
        let view = PanelView::new(data, schedule)?;
        Ok(Self::from_view(&view, window, data.first_year()))
    }

    pub(crate) fn from_view(view: &PanelView, window: EventWindow, first_year: i32) -> Self {
        let cohorts = view.cohorts();
        let mut counts: BTreeMap<i32, BTreeMap<usize, f64>> = BTreeMap::new();
        for (c, (_, members)) in cohorts.iter().enumerate() {
            for &u in members {
                for t in 0..view.n_years {
                    let e = window.clamp(view.event_time(u, t).unwrap_or(0));
                    if e != 0 {
                        *counts.entry(e).or_default().entry(c).or_default() += 1.0;
                    }
                }
            }
        }
        let shares = counts
            .into_iter()
            .map(|(e, per_cohort)| {
                let total: f64 = per_cohort.values().sum();
                (e, per_cohort.into_iter().map(|(c, n)| (c, n / total)).collect())
            })
            .collect();
        Self {
            cohorts: cohorts
                .into_iter()
                .map(|(a, m)| (first_year + a as i32, m))
                .collect(),
            shares,
        }
    }
}

/// Saturates the two-way fixed-effects regression in cohort × event-time
/// indicators (never-treated states as the control cohort, reference period
/// 0) and averages the cohort-specific coefficients with the cohort shares.
/// Standard errors by the delta method on the state-clustered covariance,
/// treating the shares as fixed.
pub fn did_interaction_weighted(
    data: &PanelDataset,
    schedule: &TreatmentSchedule,
    window: EventWindow,
    options: &EstimatorOptions,
) -> Result<EstimatorResult, EstimatorError> {
    let view = PanelView::new(data, schedule)?;
    view.require_controls()?;
    let table = CohortTable::from_view(&view, window, data.first_year());
    let cohort_of: Vec<Option<usize>> = {
        let mut v = vec![None; view.n_units];
        for (c, (_, members)) in table.cohorts.iter().enumerate() {
            for &u in members {
                v[u] = Some(c);
            }
        }
        v
    };

    let mut columns: BTreeMap<(usize, i32), usize> = BTreeMap::new();
    for (&e, cells) in &table.shares {
        for &(c, _) in cells {
            columns.insert((c, e), 0);
        }
    }
    for (i, v) in columns.values_mut().enumerate() {
        *v = i;
    }
    let twfe = twfe_indicators(
        &view,
        columns.len(),
        |u, t| {
            let c = cohort_of[u]?;
            let e = window.clamp(view.event_time(u, t)?);
            (e != 0).then(|| columns[&(c, e)])
        },
        options.use_covariate,
        options.covariance,
    )?;

    let p = twfe.fit.coefficients.len();
    let mut effects = Vec::new();
    let mut diagnostics = Vec::new();
    for (&e, cells) in &table.shares {
        if e > EFFECT_YEARS as i32 {
            continue;
        }
        let mut weights = DVector::zeros(p);
        let mut total = 0.0;
        for &(c, share) in cells {
            let col = columns[&(c, e)];
            if twfe.fit.coefficient(col).is_some() {
                weights[col] = share;
                total += share;
            } else {
                diagnostics.push(format!("cohort {} at event time {e} dropped as collinear", table.cohorts[c].0));
            }
        }
        if total == 0.0 {
            if e >= 1 {
                effects.push(EventEffect::new(e, f64::NAN, f64::NAN));
            }
            continue;
        }
        weights /= total;
        let estimate: f64 = (0..p)
            .filter(|&j| weights[j] != 0.0)
            .map(|j| weights[j] * twfe.fit.coefficients[j])
            .sum();
        let variance = FitResult::linear_variance(&twfe.vcov, &weights);
        effects.push(EventEffect::new(e, estimate, variance.max(0.0).sqrt()));
    }
    Ok(EstimatorResult::new(EstimatorId::DidHt, effects, diagnostics))
}
