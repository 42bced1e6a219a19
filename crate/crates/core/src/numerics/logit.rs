use nalgebra::{DMatrix, DVector};

use super::NumericError;

const MAX_ITERATIONS: usize = 100;
const SEPARATION_NORM: f64 = 1e6;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y.iter())
        .map(|(&e, &yi)| {
            // log(1 + exp(e)) computed stably.
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            yi * e - softplus
        })
        .sum()
}

/// Logistic regression by iteratively reweighted least squares (Newton
/// steps with step halving), iterated until `‖X'(y - p̂)‖ < 1e-10 · n`.
pub fn logistic_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>, NumericError> {
    let (n, p) = x.shape();
    if n == 0 {
        return Err(NumericError::Empty);
    }
    if y.len() != n {
        return Err(NumericError::Dimension(format!("X has {n} rows, y has {}", y.len())));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(NumericError::NonBinary);
    }
    let mean = y.mean();
    if mean == 0.0 || mean == 1.0 {
        return Err(NumericError::Separation);
    }
    let tolerance = 1e-10 * (n as f64).max(1.0);
    let mut beta = DVector::zeros(p);
    let mut ll = log_likelihood(x, y, &beta);
    for _ in 0..MAX_ITERATIONS {
        let probs = (x * &beta).map(sigmoid);
        let score = x.transpose() * (y - &probs);
        if score.norm() < tolerance {
            // A vanishing score with saturated probabilities means the
            // likelihood has no finite maximiser.
            if probs.iter().any(|&p| !(1e-9..=1.0 - 1e-9).contains(&p)) {
                return Err(NumericError::Separation);
            }
            return Ok(beta);
        }
        let mut info = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            let w = probs[i] * (1.0 - probs[i]);
            let xi = x.row(i);
            for a in 0..p {
                for b in 0..p {
                    info[(a, b)] += w * xi[a] * xi[b];
                }
            }
        }
        let step = info
            .cholesky()
            .map(|c| c.solve(&score))
            .ok_or(NumericError::Separation)?;
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let candidate = &beta + &step * scale;
            let ll_new = log_likelihood(x, y, &candidate);
            if ll_new >= ll - 1e-12 * ll.abs() {
                beta = candidate;
                ll = ll_new;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved || beta.norm() > SEPARATION_NORM {
            return Err(NumericError::Separation);
        }
    }
    let probs = (x * &beta).map(sigmoid);
    if probs.iter().any(|&p| p < 1e-10 || p > 1.0 - 1e-10) {
        return Err(NumericError::Separation);
    }
    Err(NumericError::NotConverged {
        what: "logistic regression",
        iterations: MAX_ITERATIONS,
    })
}

pub(crate) fn predict(x: &DMatrix<f64>, beta: &DVector<f64>) -> DVector<f64> {
    (x * beta).map(sigmoid)
}
