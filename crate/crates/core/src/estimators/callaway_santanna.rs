//! Staggered-adoption difference-in-differences with doubly robust
//! group-time effects and never-treated comparisons.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::view::PanelView;
use super::{EstimatorError, EstimatorId, EstimatorOptions, EstimatorResult, EventEffect};
use crate::dgp::EFFECT_YEARS;
use crate::numerics::{logistic_fit, logistic_predict, NumericError};
use crate::panel::{PanelDataset, TreatmentSchedule};

const PS_CAP: f64 = 1.0 - 1e-6;

/// A group-time effect and its influence function over the estimation
/// sample (scaled so that `Var ≈ mean(ψ²) / n_sample`).
struct GroupTime {
    att: f64,
    influence: Vec<f64>,
}

/// Doubly robust panel ATT: outcome regression of `ΔY` on `covariates`
/// among controls combined with a logit propensity score.
fn doubly_robust_att(
    delta_y: &DVector<f64>,
    treated: &DVector<f64>,
    covariates: &DMatrix<f64>,
) -> Result<GroupTime, NumericError> {
    let (n, k) = covariates.shape();
    let nf = n as f64;
    let control = treated.map(|d| 1.0 - d);

    let gamma = logistic_fit(covariates, treated)?;
    let ps = logistic_predict(covariates, &gamma).map(|p| p.min(PS_CAP));

    let mut xwx = DMatrix::<f64>::zeros(k, k);
    let mut xwy = DVector::<f64>::zeros(k);
    for i in 0..n {
        if control[i] > 0.0 {
            let row = covariates.row(i).transpose();
            xwx += &row * row.transpose();
            xwy += &row * delta_y[i];
        }
    }
    let xpx_inv = (&xwx / nf)
        .try_inverse()
        .ok_or(NumericError::Singular("outcome regression among controls"))?;
    let beta = &xpx_inv * &xwy / nf;
    let fitted = covariates * &beta;
    let resid = delta_y - &fitted;

    let w_treat = treated.clone();
    let w_cont = DVector::from_fn(n, |i, _| ps[i] * control[i] / (1.0 - ps[i]));
    let mean_wt = w_treat.mean();
    let mean_wc = w_cont.mean();
    let att_treat = w_treat.component_mul(&resid);
    let att_cont = w_cont.component_mul(&resid);
    let eta_treat = att_treat.mean() / mean_wt;
    let eta_cont = att_cont.mean() / mean_wc;

    // Linear representations of the two nuisance fits.
    let ols_rep = DMatrix::from_fn(n, k, |i, j| control[i] * resid[i] * covariates[(i, j)]) * &xpx_inv;
    let mut info = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        let row = covariates.row(i).transpose();
        info += &row * row.transpose() * (ps[i] * (1.0 - ps[i]));
    }
    let hessian = (&info / nf)
        .try_inverse()
        .ok_or(NumericError::Singular("propensity score information"))?;
    let ps_rep = DMatrix::from_fn(n, k, |i, j| (treated[i] - ps[i]) * covariates[(i, j)]) * &hessian;

    let col_mean = |w: &dyn Fn(usize) -> f64| -> DVector<f64> {
        DVector::from_fn(k, |j, _| (0..n).map(|i| w(i) * covariates[(i, j)]).sum::<f64>() / nf)
    };
    let m1 = col_mean(&|i| w_treat[i]);
    let m2 = col_mean(&|i| w_cont[i] * (resid[i] - eta_cont));
    let m3 = col_mean(&|i| w_cont[i]);

    let treat_2 = &ols_rep * m1;
    let cont_2 = &ps_rep * m2;
    let cont_3 = &ols_rep * m3;
    let influence = (0..n)
        .map(|i| {
            let inf_treat = (att_treat[i] - w_treat[i] * eta_treat - treat_2[i]) / mean_wt;
            let inf_cont = (att_cont[i] - w_cont[i] * eta_cont + cont_2[i] - cont_3[i]) / mean_wc;
            inf_treat - inf_cont
        })
        .collect();
    Ok(GroupTime {
        att: eta_treat - eta_cont,
        influence,
    })
}

/// Group-time effects `ATT(g, t)` for every adoption cohort `g` and
/// post-adoption year `t`, each comparing `Y_t − Y_{g−1}` between the
/// cohort and the never-treated states (doubly robust in the base-year
/// covariate). Event-time effects aggregate the group-time effects with
/// weights proportional to cohort size among cohorts observed at that
/// event time. Standard errors come from the aggregated influence function,
/// which accounts for the estimated weights, clustered by state.
pub fn did_staggered_cs(
    data: &PanelDataset,
    schedule: &TreatmentSchedule,
    options: &EstimatorOptions,
) -> Result<EstimatorResult, EstimatorError> {
    let view = PanelView::new(data, schedule)?;
    view.require_controls()?;
    let n = view.n_units;
    let nf = n as f64;
    let controls = view.never_treated();
    let mut diagnostics = Vec::new();

    // Event time → (cohort share, ATT, full-sample influence function).
    let mut cells: BTreeMap<i32, Vec<(f64, f64, Vec<f64>, usize)>> = BTreeMap::new();
    let cohorts = view.cohorts();
    for (g, (adopt, members)) in cohorts.iter().enumerate() {
        if *adopt == 0 {
            diagnostics.push("cohort at year index 0 has no base period; dropped".to_string());
            continue;
        }
        let base = adopt - 1;
        let sample: Vec<usize> = members.iter().chain(&controls).copied().collect();
        let m = sample.len();
        let treated = DVector::from_fn(m, |i, _| if i < members.len() { 1.0 } else { 0.0 });
        let x_base: Vec<f64> = sample.iter().map(|&u| view.x[view.idx(u, base)]).collect();
        let varies = x_base.iter().any(|&v| (v - x_base[0]).abs() > 1e-12 * x_base[0].abs().max(1.0));
        let covariates = if options.use_covariate && varies {
            DMatrix::from_fn(m, 2, |i, j| if j == 0 { 1.0 } else { x_base[i] })
        } else {
            DMatrix::from_element(m, 1, 1.0)
        };
        let share = members.len() as f64 / nf;
        for t in *adopt..view.n_years {
            let e = (t - adopt + 1) as i32;
            if e > EFFECT_YEARS as i32 {
                break;
            }
            let delta_y = DVector::from_fn(m, |i, _| {
                let u = sample[i];
                view.y[view.idx(u, t)] - view.y[view.idx(u, base)]
            });
            match doubly_robust_att(&delta_y, &treated, &covariates) {
                Ok(gt) => {
                    let mut full = vec![0.0; n];
                    let scale = nf / m as f64;
                    for (i, &u) in sample.iter().enumerate() {
                        full[u] += scale * gt.influence[i];
                    }
                    cells.entry(e).or_default().push((share, gt.att, full, g));
                }
                Err(err) => diagnostics.push(format!("ATT(cohort {adopt}, year {t}) dropped: {err}")),
            }
        }
    }

    let cohort_of: Vec<Option<usize>> = {
        let mut v = vec![None; n];
        for (g, (_, members)) in cohorts.iter().enumerate() {
            for &u in members {
                v[u] = Some(g);
            }
        }
        v
    };
    let mut effects = Vec::new();
    for (&e, group) in &cells {
        let total: f64 = group.iter().map(|c| c.0).sum();
        let att: Vec<f64> = group.iter().map(|c| c.1).collect();
        let estimate: f64 = group.iter().map(|c| c.0 / total * c.1).sum();
        let mut influence = vec![0.0; n];
        for (share, _, psi, _) in group {
            for (acc, v) in influence.iter_mut().zip(psi) {
                *acc += share / total * v;
            }
        }
        // Estimated-weight correction.
        for (i, acc) in influence.iter_mut().enumerate() {
            let mut if1 = 0.0;
            let mut sum_dev = 0.0;
            for (k, (share, _, _, g)) in group.iter().enumerate() {
                let dev = f64::from(u8::from(cohort_of[i] == Some(*g))) - share;
                if1 += dev / total * att[k];
                sum_dev += dev;
            }
            let if2: f64 = group.iter().zip(&att).map(|(c, a)| sum_dev * c.0 / (total * total) * a).sum();
            *acc += if1 - if2;
        }
        let se = influence.iter().map(|v| v * v).sum::<f64>().sqrt() / nf;
        effects.push(EventEffect::new(e, estimate, se));
    }
    Ok(EstimatorResult::new(EstimatorId::DidSa, effects, diagnostics))
}
