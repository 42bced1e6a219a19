//! Levenberg-Marquardt nonlinear least squares with a clustered sandwich
//! covariance.

use nalgebra::{DMatrix, DVector};

use super::cluster::{cluster_meat, small_sample_factor};
use super::{ClusterSpec, CovarianceKind, FitResult, NumericError};

#[derive(Debug, Clone)]
pub struct NlsOptions {
    pub max_iterations: usize,
    /// Stop when the relative objective change of an accepted step falls
    /// below this.
    pub objective_tolerance: f64,
    pub gradient_tolerance: f64,
    /// Relative tolerance of the finite-difference Jacobian check at the
    /// initial point.
    pub jacobian_check_tolerance: f64,
    pub covariance: CovarianceKind,
    /// Parameters profiled out before the call (counted in the CR1 `K`).
    pub extra_params: usize,
}

impl Default for NlsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            objective_tolerance: 1e-10,
            gradient_tolerance: 1e-8,
            jacobian_check_tolerance: 1e-4,
            covariance: CovarianceKind::Cr1,
            extra_params: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NlsFit {
    /// Coefficients are the parameters; `vcov` is the clustered sandwich.
    pub fit: FitResult,
    pub iterations: usize,
    /// Objective `‖r‖²` after every accepted step, starting at the initial point.
    pub trace: Vec<f64>,
}

fn check_jacobian<R, J>(residual_fn: &R, jacobian_fn: &J, at: &DVector<f64>, tol: f64) -> Result<(), NumericError>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let analytic = jacobian_fn(at);
    let mut worst: Option<(f64, usize, usize, f64, f64)> = None;
    for c in 0..at.len() {
        let h = 1e-6 * at[c].abs().max(1.0);
        let mut up = at.clone();
        up[c] += h;
        let mut down = at.clone();
        down[c] -= h;
        let numeric = (residual_fn(&up) - residual_fn(&down)) / (2.0 * h);
        for r in 0..numeric.len() {
            let a = analytic[(r, c)];
            let n = numeric[r];
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1.0);
            if rel > tol && worst.is_none_or(|w| rel > w.0) {
                worst = Some((rel, r, c, a, n));
            }
        }
    }
    match worst {
        Some((_, row, col, analytic, numeric)) => Err(NumericError::JacobianMismatch {
            row,
            col,
            analytic,
            numeric,
        }),
        None => Ok(()),
    }
}

/// Minimises `‖r(θ)‖²` by Levenberg-Marquardt.
///
/// The supplied Jacobian (`∂r/∂θ`, rows = residuals) is first checked
/// against central finite differences at `init`. Converges when an accepted
/// step changes the objective by less than `objective_tolerance`
/// (relative) or the gradient norm drops below `gradient_tolerance`. The
/// returned covariance is the cluster-robust sandwich built from the
/// Jacobian at the solution.
pub fn nls_fit<R, J>(
    residual_fn: R,
    jacobian_fn: J,
    init: &DVector<f64>,
    clusters: &ClusterSpec,
    options: &NlsOptions,
) -> Result<NlsFit, NumericError>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    check_jacobian(&residual_fn, &jacobian_fn, init, options.jacobian_check_tolerance)?;
    let p = init.len();
    let mut theta = init.clone();
    let mut r = residual_fn(&theta);
    if r.is_empty() {
        return Err(NumericError::Empty);
    }
    if clusters.len() != r.len() {
        return Err(NumericError::Dimension(format!(
            "{} residuals, {} cluster ids",
            r.len(),
            clusters.len()
        )));
    }
    let mut objective = r.norm_squared();
    let mut trace = vec![objective];
    let mut jac = jacobian_fn(&theta);
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        if grad.norm() < options.gradient_tolerance {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let mut damped = jtj.clone();
            for i in 0..p {
                damped[(i, i)] += mu * jtj[(i, i)].max(1e-12);
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    mu *= 10.0;
                    continue;
                }
            };
            let candidate = &theta + &step;
            let r_new = residual_fn(&candidate);
            let obj_new = r_new.norm_squared();
            if obj_new.is_finite() && obj_new <= objective {
                let change = (objective - obj_new) / objective.max(f64::MIN_POSITIVE);
                theta = candidate;
                r = r_new;
                objective = obj_new;
                trace.push(objective);
                jac = jacobian_fn(&theta);
                mu = (mu / 3.0).max(1e-15);
                accepted = true;
                if change < options.objective_tolerance {
                    converged = true;
                }
                break;
            }
            mu *= 4.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // No descent direction left at machine precision.
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(NumericError::NlsNotConverged { iterations, trace });
    }

    let n = r.len();
    let jtj = jac.transpose() * &jac;
    let bread = jtj
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| jtj.clone().try_inverse())
        .ok_or(NumericError::Singular("J'J at the NLS solution"))?;
    let mut scores = jac.clone();
    for i in 0..n {
        scores.row_mut(i).scale_mut(r[i]);
    }
    let vcov = if clusters.n_clusters() >= 2 {
        let meat = cluster_meat(&scores, clusters);
        let c = small_sample_factor(options.covariance, clusters.n_clusters(), n, p + options.extra_params);
        let v = &bread * meat * &bread * c;
        (&v + v.transpose()) * 0.5
    } else {
        DMatrix::from_element(p, p, f64::NAN)
    };
    let dof = n.saturating_sub(p + options.extra_params);
    Ok(NlsFit {
        fit: FitResult {
            coefficients: theta,
            vcov,
            residuals: r,
            dof,
            kept: (0..p).collect(),
            dropped: Vec::new(),
            xtx_inv: bread,
            weights: None,
        },
        iterations,
        trace,
    })
}
