use nalgebra::{DMatrix, DVector};

use super::NumericError;

/// Ridge coefficients `(X'X + λP)⁻¹ X'y`, where `P` is the identity with
/// zeros on the `unpenalized` columns (typically an intercept).
pub fn ridge(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    unpenalized: &[usize],
) -> Result<DVector<f64>, NumericError> {
    if x.nrows() == 0 {
        return Err(NumericError::Empty);
    }
    if x.nrows() != y.len() {
        return Err(NumericError::Dimension(format!(
            "X has {} rows, y has {}",
            x.nrows(),
            y.len()
        )));
    }
    let lambda = lambda.max(0.0);
    let mut gram = x.transpose() * x;
    for j in 0..gram.ncols() {
        if !unpenalized.contains(&j) {
            gram[(j, j)] += lambda;
        }
    }
    let rhs = x.transpose() * y;
    if let Some(chol) = gram.clone().cholesky() {
        return Ok(chol.solve(&rhs));
    }
    // λ = 0 with a rank-deficient design: minimum-norm solution.
    gram.svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|_| NumericError::Singular("ridge normal equations"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ols;

    #[test]
    fn scalar_formula() {
        let x = DMatrix::from_element(2, 1, 1.0);
        let b = ridge(&x, &DVector::from_vec(vec![2.0, 2.0]), 2.0, &[]).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_penalty_is_ols() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.1, 1.0, 1.3, 1.0, 2.2, 1.0, 2.9]);
        let y = DVector::from_vec(vec![0.5, 1.9, 3.1, 3.7]);
        let b = ridge(&x, &y, 0.0, &[]).unwrap();
        let fit = ols(&x, &y, None).unwrap();
        assert!((b - fit.coefficients).amax() < 1e-10);
    }

    #[test]
    fn huge_penalty_shrinks_to_zero() {
        let x = DMatrix::from_row_slice(3, 2, &[0.1, 1.0, 0.7, -0.3, 1.2, 0.4]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let b = ridge(&x, &y, 1e12, &[]).unwrap();
        assert!(b.amax() < 1e-6);
    }

    #[test]
    fn intercept_left_unpenalized() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 1.0, 0.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![4.0, 5.0, 6.0]);
        let b = ridge(&x, &y, 1e12, &[0]).unwrap();
        assert!((b[0] - 5.0).abs() < 1e-9);
        assert!(b[1].abs() < 1e-9);
    }
}
