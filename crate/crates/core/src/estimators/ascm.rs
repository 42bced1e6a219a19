//! Partially pooled augmented synthetic control for staggered adoption.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::view::PanelView;
use super::{EstimatorError, EstimatorId, EstimatorOptions, EstimatorResult, EventEffect};
use crate::dgp::EFFECT_YEARS;
use crate::numerics::{pooled_simplex_weights, ridge, PooledProblem};
use crate::panel::{PanelDataset, TreatmentSchedule};

/// Minimum number of pre-adoption years for a treated state to be matched.
pub const MIN_PRE_PERIODS: usize = 3;

/// Per treated unit: its pre-period fit inputs and, for each observed post
/// event time, the gap as an affine function of the donor weights:
/// `gap = offset − w · slope`.
struct UnitGaps {
    donors_pre: DMatrix<f64>,
    target_pre: DVector<f64>,
    gaps: BTreeMap<i32, (f64, DVector<f64>)>,
}

/// Standardised copies of the columns of `m` (centred, unit variance;
/// constant columns become zero).
fn standardize(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<(f64, f64)>) {
    let n = m.nrows() as f64;
    let mut out = m.clone();
    let mut scales = Vec::with_capacity(m.ncols());
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let mean = m.column(j).sum() / n;
        let sd = (m.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let sd = if sd > 1e-12 * mean.abs().max(1.0) { sd } else { f64::INFINITY };
        col.iter_mut().for_each(|v| *v = (*v - mean) / sd);
        scales.push((mean, sd));
    }
    (out, scales)
}

fn unit_gaps(
    view: &PanelView,
    unit: usize,
    adopt: usize,
    donors: &[usize],
    options: &EstimatorOptions,
) -> Result<UnitGaps, EstimatorError> {
    let n_d = donors.len();
    // Row ℓ is the year ℓ + 1 before adoption.
    let donors_pre = DMatrix::from_fn(adopt, n_d, |l, d| view.y[view.idx(donors[d], adopt - 1 - l)]);
    let target_pre = DVector::from_fn(adopt, |l, _| view.y[view.idx(unit, adopt - 1 - l)]);
    let mut gaps = BTreeMap::new();
    for k in 1..=EFFECT_YEARS {
        let t = adopt + k - 1;
        if t >= view.n_years {
            break;
        }
        // Predictors: donor pre-period outcomes (and the covariate at t).
        let n_cov = usize::from(options.use_covariate);
        let raw = DMatrix::from_fn(n_d, adopt + n_cov, |d, c| {
            if c < adopt {
                donors_pre[(c, d)]
            } else {
                view.x[view.idx(donors[d], t)]
            }
        });
        let (z, scales) = standardize(&raw);
        let design = DMatrix::from_fn(n_d, z.ncols() + 1, |d, c| if c == 0 { 1.0 } else { z[(d, c - 1)] });
        let outcome = DVector::from_fn(n_d, |d, _| view.y[view.idx(donors[d], t)]);
        let lambda = options.ascm.ridge_lambda * n_d as f64;
        let coef = ridge(&design, &outcome, lambda, &[0])?;
        let predict = |values: &dyn Fn(usize) -> f64| -> f64 {
            coef[0]
                + scales
                    .iter()
                    .enumerate()
                    .map(|(c, (mean, sd))| coef[c + 1] * (values(c) - mean) / sd)
                    .sum::<f64>()
        };
        let target_m = predict(&|c| if c < adopt { target_pre[c] } else { view.x[view.idx(unit, t)] });
        let donor_fitted = &design * &coef;
        let slope = DVector::from_fn(n_d, |d, _| outcome[d] - donor_fitted[d]);
        gaps.insert(k as i32, (view.y[view.idx(unit, t)] - target_m, slope));
    }
    Ok(UnitGaps {
        donors_pre,
        target_pre,
        gaps,
    })
}

fn average_gaps(units: &[UnitGaps], weights: &[Vec<f64>], keep: impl Fn(usize) -> bool) -> BTreeMap<i32, f64> {
    let mut sums: BTreeMap<i32, (f64, f64)> = BTreeMap::new();
    for (j, unit) in units.iter().enumerate() {
        if !keep(j) {
            continue;
        }
        let w = DVector::from_column_slice(&weights[j]);
        for (&k, (offset, slope)) in &unit.gaps {
            let cell = sums.entry(k).or_default();
            cell.0 += offset - w.dot(slope);
            cell.1 += 1.0;
        }
    }
    sums.into_iter().map(|(k, (s, n))| (k, s / n)).collect()
}

/// Matches every treated state to a simplex-weighted combination of the
/// never-treated states over its pre-adoption outcomes, with weights chosen
/// jointly to balance each unit and the treated average (`options.ascm.nu`
/// sets the trade-off). Remaining imbalance is corrected by a ridge
/// regression of donor post outcomes on donor pre outcomes and the
/// covariate. Effects average the per-unit gaps; standard errors by a
/// leave-one-treated-unit-out jackknife.
pub fn ascm_staggered(
    data: &PanelDataset,
    schedule: &TreatmentSchedule,
    options: &EstimatorOptions,
) -> Result<EstimatorResult, EstimatorError> {
    let view = PanelView::new(data, schedule)?;
    view.require_controls()?;
    let donors = view.never_treated();
    let mut diagnostics = Vec::new();
    let mut units = Vec::new();
    for u in view.treated_units() {
        let adopt = view.adoption[u].unwrap_or(0);
        if adopt < MIN_PRE_PERIODS {
            diagnostics.push(format!(
                "unit {u} has {adopt} pre-adoption years (< {MIN_PRE_PERIODS}); excluded"
            ));
            continue;
        }
        units.push(unit_gaps(&view, u, adopt, &donors, options)?);
    }
    if units.is_empty() {
        return Err(EstimatorError::Design("no treated state has enough pre-adoption years".into()));
    }

    let problem = |keep: &dyn Fn(usize) -> bool| PooledProblem {
        donors: units.iter().enumerate().filter(|(j, _)| keep(*j)).map(|(_, u)| u.donors_pre.clone()).collect(),
        targets: units.iter().enumerate().filter(|(j, _)| keep(*j)).map(|(_, u)| u.target_pre.clone()).collect(),
        nu: options.ascm.nu,
    };
    let tol = options.ascm.weight_tolerance;
    let full = pooled_simplex_weights(&problem(&|_| true), None, tol)?;
    let mut converged = full.converged;
    if !full.converged {
        diagnostics.push(format!(
            "donor weights stopped after {} iterations (KKT residual {:.3e})",
            full.iterations, full.kkt_residual
        ));
    }
    let point = average_gaps(&units, &full.weights, |_| true);

    let n_units = units.len();
    let mut se: BTreeMap<i32, f64> = point.keys().map(|&k| (k, f64::NAN)).collect();
    if n_units >= 2 {
        let mut replicates: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
        for m in 0..n_units {
            let keep = |j: usize| j != m;
            let warm: Vec<Vec<f64>> = full
                .weights
                .iter()
                .enumerate()
                .filter(|(j, _)| keep(*j))
                .map(|(_, w)| w.clone())
                .collect();
            let sol = pooled_simplex_weights(&problem(&keep), Some(&warm), tol)?;
            if !sol.converged {
                converged = false;
            }
            let mut weights = full.weights.clone();
            let mut it = sol.weights.into_iter();
            for (j, w) in weights.iter_mut().enumerate() {
                if keep(j) {
                    *w = it.next().unwrap_or_default();
                }
            }
            for (k, v) in average_gaps(&units, &weights, keep) {
                replicates.entry(k).or_default().push(v);
            }
        }
        for (k, values) in replicates {
            let n = values.len();
            if n >= 2 {
                let mean = values.iter().sum::<f64>() / n as f64;
                let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
                se.insert(k, ((n - 1) as f64 / n as f64 * ss).sqrt());
            }
        }
    } else {
        diagnostics.push("a single matched unit leaves no jackknife".into());
    }
    let effects = point.iter().map(|(&k, &est)| EventEffect::new(k, est, se[&k])).collect();
    let mut result = EstimatorResult::new(EstimatorId::Ascm, effects, diagnostics);
    result.converged &= converged && n_units >= 2;
    Ok(result)
}
