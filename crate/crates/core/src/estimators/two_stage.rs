//! Two-stage difference-in-differences.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::bootstrap::cluster_bootstrap_se;
use super::view::PanelView;
use super::{EstimatorError, EstimatorId, EstimatorOptions, EstimatorResult, EventEffect};
use crate::dgp::EFFECT_YEARS;
use crate::numerics::{ols, two_way_effects, TwoWayEffects};
use crate::panel::{EventWindow, PanelDataset, TreatmentSchedule};

/// Additive fit `α_i + δ_t (+ βX)` on the untreated observations.
pub(crate) struct StageOne {
    pub effects: TwoWayEffects,
    pub beta: f64,
    /// Units with at least one untreated observation (α_i identified).
    pub identified: Vec<bool>,
}

impl StageOne {
    /// Outcome net of the untreated model at one cell.
    pub fn adjusted(&self, view: &PanelView, u: usize, t: usize) -> f64 {
        let i = view.idx(u, t);
        view.y[i] - self.effects.fitted(u, t) - self.beta * view.x[i]
    }
}

pub(crate) fn stage_one(view: &PanelView, use_covariate: bool) -> Result<StageOne, EstimatorError> {
    let mut units = Vec::new();
    let mut times = Vec::new();
    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut identified = vec![false; view.n_units];
    let mut year_seen = vec![false; view.n_years];
    for u in 0..view.n_units {
        for t in 0..view.n_years {
            if !view.is_treated(u, t) {
                let i = view.idx(u, t);
                units.push(u);
                times.push(t);
                y.push(view.y[i]);
                x.push(view.x[i]);
                identified[u] = true;
                year_seen[t] = true;
            }
        }
    }
    if let Some(t) = year_seen.iter().position(|s| !s) {
        return Err(EstimatorError::Design(format!(
            "year index {t} has no untreated observations"
        )));
    }
    let mut beta = 0.0;
    if use_covariate {
        let ry = two_way_effects(&y, &units, &times)?.residuals;
        let rx = two_way_effects(&x, &units, &times)?.residuals;
        let sxx: f64 = rx.iter().map(|v| v * v).sum();
        let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
        let xx: f64 = x.iter().map(|v| v * v).sum();
        if sxx > 1e-12 * xx.max(1.0) {
            beta = sxy / sxx;
        }
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi -= beta * xi;
        }
    }
    let effects = two_way_effects(&y, &units, &times)?;
    Ok(StageOne {
        effects,
        beta,
        identified,
    })
}

/// Stage 2: regression of the adjusted outcome on binned event-time
/// indicators (active on treated rows only) and the covariate. Untreated
/// rows enter with every indicator at zero, so they inform the covariate
/// slope alone.
fn two_stage_point(
    view: &PanelView,
    window: EventWindow,
    use_covariate: bool,
) -> Result<BTreeMap<i32, f64>, EstimatorError> {
    view.require_controls()?;
    let first = stage_one(view, false)?;
    let mut rows = Vec::new();
    let mut columns = BTreeMap::new();
    for u in 0..view.n_units {
        if !first.identified[u] {
            continue;
        }
        for t in 0..view.n_years {
            match view.event_time(u, t).filter(|&e| e >= 1) {
                Some(e) => {
                    let e = window.clamp(e);
                    columns.insert(e, 0);
                    rows.push((u, t, e));
                }
                None => rows.push((u, t, 0)),
            }
        }
    }
    if rows.is_empty() {
        return Err(EstimatorError::Design("no observations with identified unit effects".into()));
    }
    if columns.is_empty() {
        return Err(EstimatorError::Design("no treated observations with identified unit effects".into()));
    }
    for (i, v) in columns.values_mut().enumerate() {
        *v = i;
    }
    let k = columns.len();
    let p = k + usize::from(use_covariate);
    let mut x = DMatrix::zeros(rows.len(), p);
    let mut y = DVector::zeros(rows.len());
    for (r, &(u, t, e)) in rows.iter().enumerate() {
        if e != 0 {
            x[(r, columns[&e])] = 1.0;
        }
        if use_covariate {
            x[(r, k)] = view.x[view.idx(u, t)];
        }
        y[r] = first.adjusted(view, u, t);
    }
    let fit = ols(&x, &y, None)?;
    Ok(columns
        .iter()
        .filter(|(&e, _)| e <= EFFECT_YEARS as i32)
        .map(|(&e, &c)| (e, fit.coefficient(c).unwrap_or(f64::NAN)))
        .collect())
}

/// Gardner-style two-stage estimator: unit and year effects fitted on the
/// untreated observations only (never-treated rows and pre-adoption rows of
/// adopters), then the adjusted outcome `Y − λ̂ − δ̂` regressed on
/// treated event-time indicators and the covariate over the whole panel.
/// Standard errors by a state-clustered bootstrap of both stages, seeded
/// by `seed`.
pub fn did_two_stage(
    data: &PanelDataset,
    schedule: &TreatmentSchedule,
    window: EventWindow,
    options: &EstimatorOptions,
    seed: u64,
) -> Result<EstimatorResult, EstimatorError> {
    let view = PanelView::new(data, schedule)?;
    let point = two_stage_point(&view, window, options.use_covariate)?;
    let mut diagnostics = unidentified_units(&view);
    let times: Vec<i32> = point.keys().copied().collect();
    let (se, failures) = cluster_bootstrap_se(&view, &times, options.bootstrap_reps, seed, |v| {
        two_stage_point(v, window, options.use_covariate)
    });
    if failures > 0 {
        diagnostics.push(format!("{failures} bootstrap draws failed"));
    }
    let effects = point
        .iter()
        .map(|(&e, &est)| EventEffect::new(e, est, se[&e]))
        .collect();
    Ok(EstimatorResult::new(EstimatorId::Did2s, effects, diagnostics))
}

pub(crate) fn unidentified_units(view: &PanelView) -> Vec<String> {
    view.adoption
        .iter()
        .enumerate()
        .filter(|(_, a)| **a == Some(0))
        .map(|(u, _)| format!("unit {u} treated in every year; excluded"))
        .collect()
}
