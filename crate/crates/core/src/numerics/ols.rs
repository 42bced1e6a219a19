use nalgebra::{DMatrix, DVector};

use super::NumericError;

/// Relative residual norm below which a column counts as collinear with
/// the columns to its left.
const COLLINEAR_TOLERANCE: f64 = 1e-9;

/// Result of a least-squares fit.
///
/// Coefficients and covariance are indexed by the original design columns;
/// dropped (collinear) columns carry `NaN`.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub coefficients: DVector<f64>,
    /// Homoskedastic covariance `s² (X'WX)⁻¹` over kept columns.
    pub vcov: DMatrix<f64>,
    /// `y - Xβ`, unweighted.
    pub residuals: DVector<f64>,
    pub dof: usize,
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    /// `(X'WX)⁻¹` restricted to the kept columns, in `kept` order.
    pub xtx_inv: DMatrix<f64>,
    pub weights: Option<DVector<f64>>,
}

impl FitResult {
    pub fn coefficient(&self, column: usize) -> Option<f64> {
        let c = self.coefficients[column];
        (!c.is_nan()).then_some(c)
    }

    pub fn n_obs(&self) -> usize {
        self.residuals.len()
    }

    /// Variance of the linear combination `c'β` under `vcov`. Dropped
    /// columns must have zero weight.
    pub fn linear_variance(vcov: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
        let mut v = 0.0;
        for i in 0..c.len() {
            if c[i] == 0.0 {
                continue;
            }
            for j in 0..c.len() {
                if c[j] != 0.0 {
                    v += c[i] * vcov[(i, j)] * c[j];
                }
            }
        }
        v
    }
}

/// Embeds a `kept × kept` matrix into a `p × p` matrix filled with `NaN`.
pub(crate) fn expand(p: usize, kept: &[usize], inner: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(p, p, f64::NAN);
    for (a, &i) in kept.iter().enumerate() {
        for (b, &j) in kept.iter().enumerate() {
            out[(i, j)] = inner[(a, b)];
        }
    }
    out
}

/// Weighted least squares minimising `Σ wᵢ (yᵢ - xᵢ'β)²`.
///
/// Columns are scanned left to right with modified Gram-Schmidt; a column
/// whose component orthogonal to the kept columns is negligible is dropped,
/// so the leftmost of any collinear set survives.
pub fn ols(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: Option<&DVector<f64>>,
) -> Result<FitResult, NumericError> {
    let (n, p) = x.shape();
    if n == 0 {
        return Err(NumericError::Empty);
    }
    if y.len() != n || weights.is_some_and(|w| w.len() != n) {
        return Err(NumericError::Dimension(format!("X has {n} rows, y has {}", y.len())));
    }
    let sqrt_w: Option<DVector<f64>> = weights.map(|w| w.map(|v| v.max(0.0).sqrt()));
    let mut xw = x.clone();
    let mut yw = y.clone();
    if let Some(sw) = &sqrt_w {
        for i in 0..n {
            xw.row_mut(i).scale_mut(sw[i]);
            yw[i] *= sw[i];
        }
    }

    // Modified Gram-Schmidt with deterministic dropping.
    let mut q_cols: Vec<DVector<f64>> = Vec::new();
    let mut r = DMatrix::<f64>::zeros(p, p);
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..p {
        let mut v: DVector<f64> = xw.column(j).into_owned();
        let norm0 = v.norm();
        let mut coeffs = Vec::with_capacity(q_cols.len());
        for q in &q_cols {
            let c = q.dot(&v);
            v.axpy(-c, q, 1.0);
            coeffs.push(c);
        }
        // Second pass keeps the factorisation orthogonal for nearly
        // dependent columns.
        for (k, q) in q_cols.iter().enumerate() {
            let c = q.dot(&v);
            v.axpy(-c, q, 1.0);
            coeffs[k] += c;
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= COLLINEAR_TOLERANCE * norm0 {
            dropped.push(j);
            continue;
        }
        let k = kept.len();
        for (i, c) in coeffs.into_iter().enumerate() {
            r[(i, k)] = c;
        }
        r[(k, k)] = norm;
        q_cols.push(v / norm);
        kept.push(j);
    }
    let k = kept.len();
    let r = r.view((0, 0), (k, k)).into_owned();
    let qty = DVector::from_iterator(k, q_cols.iter().map(|q| q.dot(&yw)));
    let beta_kept = r
        .solve_upper_triangular(&qty)
        .ok_or(NumericError::Singular("triangular solve in ols"))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(NumericError::Singular("triangular inverse in ols"))?;
    let xtx_inv = &r_inv * r_inv.transpose();

    let mut coefficients = DVector::from_element(p, f64::NAN);
    for (a, &j) in kept.iter().enumerate() {
        coefficients[j] = beta_kept[a];
    }
    let fitted = kept
        .iter()
        .enumerate()
        .fold(DVector::zeros(n), |acc, (a, &j)| acc + x.column(j) * beta_kept[a]);
    let residuals = y - fitted;
    let dof = n.saturating_sub(k);
    let ssr: f64 = match weights {
        Some(w) => residuals.iter().zip(w.iter()).map(|(e, w)| w * e * e).sum(),
        None => residuals.norm_squared(),
    };
    let sigma2 = if dof > 0 { ssr / dof as f64 } else { f64::NAN };
    let vcov = expand(p, &kept, &(&xtx_inv * sigma2));

    Ok(FitResult {
        coefficients,
        vcov,
        residuals,
        dof,
        kept,
        dropped,
        xtx_inv,
        weights: weights.cloned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intercept_only_mean() {
        let x = DMatrix::from_element(2, 1, 1.0);
        let fit = ols(&x, &DVector::from_vec(vec![1.0, 3.0]), None).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn exact_fit_has_zero_residuals() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![2.0, 2.5, 3.0, 3.5]);
        let fit = ols(&x, &y, None).unwrap();
        assert!(fit.residuals.amax() < 1e-12);
        assert!((fit.coefficients[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_dropped() {
        let base = DMatrix::from_row_slice(5, 2, &[1.0, 0.3, 1.0, 1.1, 1.0, 2.0, 1.0, 2.2, 1.0, 4.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 2.5, 4.0, 6.1]);
        let mut dup = DMatrix::zeros(5, 3);
        dup.columns_mut(0, 2).copy_from(&base);
        dup.set_column(2, &base.column(1));
        let full = ols(&dup, &y, None).unwrap();
        let reduced = ols(&base, &y, None).unwrap();
        assert_eq!(full.dropped, vec![2]);
        assert!(full.coefficients[2].is_nan());
        for j in 0..2 {
            assert!((full.coefficients[j] - reduced.coefficients[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rows_error() {
        let x = DMatrix::<f64>::zeros(0, 1);
        assert!(matches!(ols(&x, &DVector::zeros(0), None), Err(NumericError::Empty)));
    }

    #[test]
    fn weighted_matches_replicated_rows() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 0.0, 4.0]);
        let w = DVector::from_vec(vec![2.0, 1.0, 1.0]);
        let weighted = ols(&x, &y, Some(&w)).unwrap();
        let xr = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 3.0]);
        let yr = DVector::from_vec(vec![1.0, 1.0, 0.0, 4.0]);
        let replicated = ols(&xr, &yr, None).unwrap();
        assert!((weighted.coefficients - replicated.coefficients).amax() < 1e-12);
    }
}
