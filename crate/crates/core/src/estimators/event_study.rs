//! Two-way fixed-effects event study.

use std::collections::BTreeMap;

use super::view::{twfe_indicators, PanelView};
use super::{EstimatorError, EstimatorId, EstimatorOptions, EstimatorResult, EventEffect};
use crate::dgp::EFFECT_YEARS;
use crate::panel::{EventWindow, PanelDataset, TreatmentSchedule};

/// Regresses the outcome on event-time indicators (reference period 0,
/// leads binned at `window.min_lead`, lags at `window.max_lag`), unit and
/// year fixed effects and the covariate. Standard errors are clustered by
/// state.
pub fn did_event_study(
    data: &PanelDataset,
    schedule: &TreatmentSchedule,
    window: EventWindow,
    options: &EstimatorOptions,
) -> Result<EstimatorResult, EstimatorError> {
    let view = PanelView::new(data, schedule)?;
    view.require_controls()?;
    let (effects, diagnostics) = event_study_effects(&view, window, options)?;
    Ok(EstimatorResult::new(EstimatorId::DidEs, effects, diagnostics))
}

pub(crate) fn event_study_effects(
    view: &PanelView,
    window: EventWindow,
    options: &EstimatorOptions,
) -> Result<(Vec<EventEffect>, Vec<String>), EstimatorError> {
    let mut columns = BTreeMap::new();
    for u in view.treated_units() {
        for t in 0..view.n_years {
            let e = window.clamp(view.event_time(u, t).unwrap_or(0));
            if e != 0 {
                let next = columns.len();
                columns.entry(e).or_insert(next);
            }
        }
    }
    // Renumber so columns run in ascending event time.
    for (i, v) in columns.values_mut().enumerate() {
        *v = i;
    }
    let twfe = twfe_indicators(
        view,
        columns.len(),
        |u, t| {
            view.event_time(u, t)
                .map(|e| window.clamp(e))
                .filter(|&e| e != 0)
                .map(|e| columns[&e])
        },
        options.use_covariate,
        options.covariance,
    )?;
    let mut effects = Vec::new();
    let mut diagnostics = Vec::new();
    for (&e, &c) in &columns {
        if e > EFFECT_YEARS as i32 {
            continue;
        }
        match twfe.fit.coefficient(c) {
            Some(b) => effects.push(EventEffect::new(e, b, twfe.vcov[(c, c)].max(0.0).sqrt())),
            None => {
                diagnostics.push(format!("event time {e} dropped as collinear"));
                if e >= 1 {
                    effects.push(EventEffect::new(e, f64::NAN, f64::NAN));
                }
            }
        }
    }
    Ok((effects, diagnostics))
}
