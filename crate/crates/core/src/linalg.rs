//! Small dense linear-algebra helpers used by the samplers and checkers.
//!
//! Positive definiteness is decided by one criterion everywhere: the
//! Cholesky factorization succeeds and every diagonal entry of the factor
//! exceeds `CHOL_DIAG_MIN`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Minimum admissible diagonal entry of a Cholesky factor.
pub const CHOL_DIAG_MIN: f64 = 1e-12;

/// Symmetry tolerance for matrices that are positive (semi-)definite by contract.
pub const SYM_TOL: f64 = 1e-10;

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Lower Cholesky factor of a positive definite matrix.
pub fn cholesky_lower(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::DegenerateScatter(format!("{context}: Cholesky failed")))?;
    let l = chol.unpack();
    if (0..l.nrows()).any(|i| l[(i, i)] <= CHOL_DIAG_MIN) {
        return Err(Error::DegenerateScatter(format!(
            "{context}: Cholesky diagonal below {CHOL_DIAG_MIN:e}"
        )));
    }
    Ok(l)
}

/// Lower Cholesky factor `e` of `m^-1` (so `e e^T = m^-1`), computed without
/// forming the inverse: factor the index-reversed matrix and solve two
/// triangular systems.
pub fn cholesky_lower_of_inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let k = m.nrows();
    let reversed = DMatrix::from_fn(k, k, |i, j| m[(k - 1 - i, k - 1 - j)]);
    let l_rev = cholesky_lower(&reversed, context)?;
    // e = J * l_rev^-T * J, lower triangular with e e^T = m^-1.
    let inv_t = l_rev
        .transpose()
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::DegenerateScatter(format!("{context}: triangular solve failed")))?;
    Ok(DMatrix::from_fn(k, k, |i, j| {
        inv_t[(k - 1 - i, k - 1 - j)]
    }))
}

/// Solve `l z = v` for lower-triangular `l` and return `z^T z = v^T (l l^T)^-1 v`.
pub fn quad_form_via_cholesky(l: &DMatrix<f64>, v: &DVector<f64>) -> Result<f64> {
    let z = l
        .solve_lower_triangular(v)
        .ok_or_else(|| Error::DegenerateScatter("triangular solve failed".into()))?;
    Ok(z.dot(&z))
}

/// Numerical rank via column-pivoted QR.
///
/// The tolerance is `max(nrows, ncols) * eps * (largest column norm)`.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let max_col_norm = (0..m.ncols())
        .map(|j| m.column(j).norm())
        .fold(0.0_f64, f64::max);
    if max_col_norm == 0.0 {
        return 0;
    }
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * max_col_norm;
    let qr = m.clone().col_piv_qr();
    let r = qr.r();
    (0..r.nrows().min(r.ncols()))
        .take_while(|&i| r[(i, i)].abs() > tol)
        .count()
}

/// Sample covariance matrix of rows of `series` (length n, dimension q).
pub fn sample_covariance(series: &[DVector<f64>]) -> DMatrix<f64> {
    let n = series.len();
    let q = series[0].len();
    let mut mean = DVector::zeros(q);
    for v in series {
        mean += v;
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(q, q);
    for v in series {
        let c = v - &mean;
        cov.syger(1.0, &c, &c, 1.0);
    }
    // syger fills the lower triangle; mirror it.
    for i in 0..q {
        for j in (i + 1)..q {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    cov / (n as f64 - 1.0)
}
