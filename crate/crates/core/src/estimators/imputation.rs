//! Imputation difference-in-differences.

use std::collections::BTreeMap;

use super::bootstrap::cluster_bootstrap_se;
use super::two_stage::{stage_one, unidentified_units};
use super::view::PanelView;
use super::{EstimatorError, EstimatorId, EstimatorOptions, EstimatorResult, EventEffect};
use crate::dgp::EFFECT_YEARS;
use crate::panel::{PanelDataset, TreatmentSchedule};

fn imputation_point(view: &PanelView, use_covariate: bool) -> Result<BTreeMap<i32, f64>, EstimatorError> {
    view.require_controls()?;
    let first = stage_one(view, use_covariate)?;
    let mut sums: BTreeMap<i32, (f64, f64)> = BTreeMap::new();
    for u in view.treated_units() {
        if !first.identified[u] {
            continue;
        }
        for t in 0..view.n_years {
            match view.event_time(u, t) {
                Some(e) if (1..=EFFECT_YEARS as i32).contains(&e) => {
                    let cell = sums.entry(e).or_default();
                    cell.0 += first.adjusted(view, u, t);
                    cell.1 += 1.0;
                }
                _ => {}
            }
        }
    }
    if sums.is_empty() {
        return Err(EstimatorError::Design("no treated observations with identified unit effects".into()));
    }
    Ok(sums.into_iter().map(|(e, (s, n))| (e, s / n)).collect())
}

/// Fits `α_i + δ_t + βX` on untreated observations, imputes the untreated
/// outcome for every treated row, and averages `Y − Ŷ(0)` over the treated
/// rows at each event time. Standard errors by a state-clustered
/// bootstrap, seeded by `seed`.
pub fn did_imputation(
    data: &PanelDataset,
    schedule: &TreatmentSchedule,
    options: &EstimatorOptions,
    seed: u64,
) -> Result<EstimatorResult, EstimatorError> {
    let view = PanelView::new(data, schedule)?;
    let point = imputation_point(&view, options.use_covariate)?;
    let mut diagnostics = unidentified_units(&view);
    let times: Vec<i32> = point.keys().copied().collect();
    let (se, failures) = cluster_bootstrap_se(&view, &times, options.bootstrap_reps, seed, |v| {
        imputation_point(v, options.use_covariate)
    });
    if failures > 0 {
        diagnostics.push(format!("{failures} bootstrap draws failed"));
    }
    let effects = point
        .iter()
        .map(|(&e, &est)| EventEffect::new(e, est, se[&e]))
        .collect();
    Ok(EstimatorResult::new(EstimatorId::DidImp, effects, diagnostics))
}
