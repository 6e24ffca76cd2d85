//! Dense linear-algebra helpers on top of nalgebra.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// `AᵀWA` for a diagonal weight `W`.
pub fn weighted_gram(a: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    assert_eq!(a.nrows(), w.len());
    let mut wa = a.clone();
    for (i, wi) in w.iter().enumerate() {
        wa.row_mut(i).scale_mut(*wi);
    }
    a.transpose() * wa
}

/// `AᵀWb`.
pub fn weighted_rhs(a: &DMatrix<f64>, w: &[f64], b: &[f64]) -> DVector<f64> {
    assert_eq!(a.nrows(), w.len());
    assert_eq!(a.nrows(), b.len());
    let wb = DVector::from_iterator(b.len(), b.iter().zip(w).map(|(bi, wi)| bi * wi));
    a.tr_mul(&wb)
}

/// Solve a symmetric positive definite system by Cholesky.
pub fn spd_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Solve("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// Median of a slice (average of the two middle values for even length).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_gram_matches_explicit_product() {
        let a = DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 * 0.1 + 1.0 / (1.0 + i as f64));
        let w = [1.0, 0.5, 2.0, 0.25];
        let explicit = a.transpose() * DMatrix::from_diagonal(&DVector::from_column_slice(&w)) * &a;
        assert!((weighted_gram(&a, &w) - explicit).norm() < 1e-13);
    }

    #[test]
    fn median_and_slope() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!((fit_slope(&[0.0, 1.0, 2.0], &[1.0, -1.0, -3.0]) + 2.0).abs() < 1e-14);
    }

    #[test]
    fn spd_solve_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(spd_solve(a, &DVector::from_column_slice(&[1.0, 1.0])).is_err());
    }
}
