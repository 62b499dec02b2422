use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Pseudo-inverse of a symmetric positive semidefinite matrix and its
/// numerical rank. The matrix is equilibrated by its diagonal first, so the
/// rank decision does not depend on the units of the underlying columns.
pub(crate) fn psd_pinv(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let n = m.nrows();
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let v = m[(i, i)];
            if v > 0.0 {
                1.0 / v.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let s = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]) * d[i] * d[j]);
    let eig = SymmetricEigen::new(s);
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = top * n as f64 * f64::EPSILON;
    let mut inv = DMatrix::<f64>::zeros(n, n);
    let mut rank = 0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > tol {
            rank += 1;
            let v = eig.eigenvectors.column(k);
            inv += (v * v.transpose()) / lambda;
        }
    }
    (DMatrix::from_fn(n, n, |i, j| inv[(i, j)] * d[i] * d[j]), rank)
}

/// Inverse of a symmetric positive definite matrix, refusing near-singular
/// input. `names` label the columns for the error message.
pub(crate) fn spd_inverse(m: &DMatrix<f64>, names: &[String]) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    for i in 0..n {
        if !(m[(i, i)] > 0.0) || !m[(i, i)].is_finite() {
            return Err(Error::RankDeficient(format!(
                "no variation left in `{}`",
                names.get(i).map(String::as_str).unwrap_or("?")
            )));
        }
    }
    let d: Vec<f64> = (0..n).map(|i| 1.0 / m[(i, i)].sqrt()).collect();
    let s = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]) * d[i] * d[j]);
    let eig = SymmetricEigen::new(s.clone());
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    if !(min > 1e-11) {
        // name the regressor loading most on the null direction
        let k = eig.eigenvalues.imin();
        let v = eig.eigenvectors.column(k);
        let culprit = v.iamax();
        return Err(Error::RankDeficient(format!(
            "collinear regressors involving `{}`",
            names.get(culprit).map(String::as_str).unwrap_or("?")
        )));
    }
    let inv = s.cholesky().ok_or_else(|| Error::RankDeficient("design not positive definite".into()))?.inverse();
    Ok(DMatrix::from_fn(n, n, |i, j| inv[(i, j)] * d[i] * d[j]))
}

pub(crate) fn quad(v: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (v.transpose() * m * v)[(0, 0)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (p, r) = psd_pinv(&m);
        assert_eq!(r, 1);
        let back = &m * &p * &m;
        assert!((back - m).abs().max() < 1e-12);
    }

    #[test]
    fn spd_inverse_detects_collinearity() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 1.0]);
        assert!(matches!(spd_inverse(&m, &["a".into(), "b".into()]), Err(Error::RankDeficient(_))));
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1e-3, 1e-3, 1e-6]);
        let inv = spd_inverse(&m, &[]).unwrap();
        assert!(((&m * inv) - DMatrix::identity(2, 2)).abs().max() < 1e-9);
    }
}
