//! Debiased autoregressive model.

use nalgebra::{DMatrix, DVector};

use super::event_study::event_study_effects;
use super::view::PanelView;
use super::{EstimatorError, EstimatorId, EstimatorOptions, EstimatorResult, EventEffect};
use crate::dgp::EFFECT_YEARS;
use crate::numerics::{nls_fit, ols, ClusterSpec, FitResult, NlsOptions, NumericError};
use crate::panel::{EventWindow, PanelDataset, TreatmentSchedule};

/// Rows and layout of the nonlinear regression.
struct ArDesign<'a> {
    view: &'a PanelView,
    k: usize,
    l: usize,
    use_covariate: bool,
    /// `(unit, year)` of every modelled observation, grouped by unit.
    rows: Vec<(usize, usize)>,
    /// Start offset of each unit's rows, plus a final sentinel.
    starts: Vec<usize>,
}

impl ArDesign<'_> {
    fn n_params(&self) -> usize {
        usize::from(self.use_covariate) + self.k + self.l + 1
    }

    fn delta_at(&self) -> usize {
        usize::from(self.use_covariate)
    }

    fn theta_at(&self) -> usize {
        self.delta_at() + self.k
    }

    fn treated(&self, u: usize, t: isize) -> f64 {
        if t >= 0 && self.view.is_treated(u, t as usize) {
            1.0
        } else {
            0.0
        }
    }

    fn demean(&self, v: &mut [f64]) {
        for w in self.starts.windows(2) {
            let seg = &mut v[w[0]..w[1]];
            let mean = seg.iter().sum::<f64>() / seg.len() as f64;
            seg.iter_mut().for_each(|x| *x -= mean);
        }
    }

    /// Residual of the model with unit intercepts profiled out.
    fn residual(&self, p: &DVector<f64>) -> DVector<f64> {
        let view = self.view;
        let (d0, t0) = (self.delta_at(), self.theta_at());
        let mut r: Vec<f64> = self
            .rows
            .iter()
            .map(|&(u, t)| {
                let i = view.idx(u, t);
                let mut fit = 0.0;
                if self.use_covariate {
                    fit += p[0] * view.x[i];
                }
                for b in 1..=self.k {
                    let mut lagged = view.y[view.idx(u, t - b)];
                    for z in 0..=self.l {
                        lagged -= p[t0 + z] * self.treated(u, t as isize - (b + z) as isize);
                    }
                    fit += p[d0 + b - 1] * lagged;
                }
                for z in 0..=self.l {
                    fit += p[t0 + z] * self.treated(u, t as isize - z as isize);
                }
                view.y[i] - fit
            })
            .collect();
        self.demean(&mut r);
        DVector::from_vec(r)
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let view = self.view;
        let (d0, t0) = (self.delta_at(), self.theta_at());
        let n_p = self.n_params();
        let mut jac = DMatrix::zeros(self.rows.len(), n_p);
        for (r, &(u, t)) in self.rows.iter().enumerate() {
            if self.use_covariate {
                jac[(r, 0)] = -view.x[view.idx(u, t)];
            }
            for b in 1..=self.k {
                let mut lagged = view.y[view.idx(u, t - b)];
                for z in 0..=self.l {
                    lagged -= p[t0 + z] * self.treated(u, t as isize - (b + z) as isize);
                }
                jac[(r, d0 + b - 1)] = -lagged;
            }
            for z in 0..=self.l {
                let mut d = -self.treated(u, t as isize - z as isize);
                for b in 1..=self.k {
                    d += p[d0 + b - 1] * self.treated(u, t as isize - (b + z) as isize);
                }
                jac[(r, t0 + z)] = d;
            }
        }
        for mut col in jac.column_iter_mut() {
            let mut v: Vec<f64> = col.iter().copied().collect();
            self.demean(&mut v);
            col.copy_from_slice(&v);
        }
        jac
    }

    /// Starting values: β and δ from a within-unit autoregression that
    /// ignores treatment; θ from first differences of the event-study
    /// coefficients.
    fn initial(&self, options: &EstimatorOptions) -> DVector<f64> {
        let view = self.view;
        let n_p = self.n_params();
        let (d0, t0) = (self.delta_at(), self.theta_at());
        let mut init = DVector::zeros(n_p);

        let mut x = DMatrix::zeros(self.rows.len(), d0 + self.k);
        let mut y: Vec<f64> = Vec::with_capacity(self.rows.len());
        for (r, &(u, t)) in self.rows.iter().enumerate() {
            y.push(view.y[view.idx(u, t)]);
            if self.use_covariate {
                x[(r, 0)] = view.x[view.idx(u, t)];
            }
            for b in 1..=self.k {
                x[(r, d0 + b - 1)] = view.y[view.idx(u, t - b)];
            }
        }
        self.demean(&mut y);
        for mut col in x.column_iter_mut() {
            let mut v: Vec<f64> = col.iter().copied().collect();
            self.demean(&mut v);
            col.copy_from_slice(&v);
        }
        if let Ok(fit) = ols(&x, &DVector::from_vec(y), None) {
            for j in 0..d0 + self.k {
                init[j] = fit.coefficient(j).unwrap_or(0.0);
            }
        }

        let window = EventWindow {
            min_lead: -(view.n_years as i32),
            max_lag: view.n_years as i32,
        };
        let es_options = EstimatorOptions {
            use_covariate: self.use_covariate,
            ..options.clone()
        };
        if let Ok((effects, _)) = event_study_effects(view, window, &es_options) {
            let gamma = |j: i32| {
                effects
                    .iter()
                    .find(|e| e.event_time == j)
                    .map(|e| e.estimate)
                    .filter(|v| v.is_finite())
            };
            for z in 0..=self.l {
                let j = z as i32 + 1;
                let step = match (gamma(j), gamma(j - 1)) {
                    (Some(a), Some(b)) => a - b,
                    (Some(a), None) if z == 0 => a,
                    _ => 0.0,
                };
                init[t0 + z] = step;
            }
        }
        init
    }
}

/// Fits `Y_it = α_i + βX_it + Σ_b δ_b (Y_i,t−b − Σ_z θ_z A_i,t−b−z) +
/// Σ_z θ_z A_i,t−z + ε_it` by nonlinear least squares, with `k` outcome lags
/// and `l` treatment lags. The effect at event time `j` is the partial sum
/// `θ_0 + … + θ_{j−1}`; standard errors by the delta method on the
/// state-clustered sandwich. Non-convergence yields a result flagged as not
/// converged.
pub fn ar_debiased(
    data: &PanelDataset,
    schedule: &TreatmentSchedule,
    options: &EstimatorOptions,
) -> Result<EstimatorResult, EstimatorError> {
    let view = PanelView::new(data, schedule)?;
    view.require_controls()?;
    let k = options.ar.outcome_lags;
    let l = options.ar.treatment_lags;
    if k == 0 {
        return Err(EstimatorError::Design("at least one outcome lag is required".into()));
    }
    let first = k + l;
    if first + 2 > view.n_years {
        return Err(EstimatorError::Design(format!(
            "{} years leave fewer than two observations per state after {k} outcome and {l} treatment lags",
            view.n_years
        )));
    }
    let mut rows = Vec::new();
    let mut starts = vec![0];
    for u in 0..view.n_units {
        for t in first..view.n_years {
            rows.push((u, t));
        }
        starts.push(rows.len());
    }
    let design = ArDesign {
        view: &view,
        k,
        l,
        use_covariate: options.use_covariate,
        rows,
        starts,
    };
    let init = design.initial(options);
    let clusters = ClusterSpec::new(&design.rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let nls_options = NlsOptions {
        covariance: options.covariance,
        extra_params: view.n_units,
        ..NlsOptions::default()
    };
    let fit = match nls_fit(|p| design.residual(p), |p| design.jacobian(p), &init, &clusters, &nls_options) {
        Ok(fit) => fit,
        Err(err @ NumericError::NlsNotConverged { .. }) => {
            let effects = (1..=EFFECT_YEARS as i32)
                .map(|j| EventEffect::new(j, f64::NAN, f64::NAN))
                .collect();
            return Ok(EstimatorResult::new(EstimatorId::ArDb, effects, vec![err.to_string()]));
        }
        Err(err) => return Err(err.into()),
    };

    let t0 = design.theta_at();
    let n_p = design.n_params();
    let effects = (1..=EFFECT_YEARS.min(l + 1))
        .map(|j| {
            let c = DVector::from_fn(n_p, |i, _| if i >= t0 && i < t0 + j { 1.0 } else { 0.0 });
            let estimate = c.dot(&fit.fit.coefficients);
            let variance = FitResult::linear_variance(&fit.fit.vcov, &c);
            EventEffect::new(j as i32, estimate, variance.max(0.0).sqrt())
        })
        .collect();
    let diagnostics = vec![format!("NLS converged in {} iterations", fit.iterations)];
    Ok(EstimatorResult::new(EstimatorId::ArDb, effects, diagnostics))
}
