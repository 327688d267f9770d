//! Internal dense complex linear algebra helpers.
//!
//! Diagonal entries of matrix inverses are needed throughout the crate
//! (SNR-loss parameters are diagonals of inverse Gram matrices). Inverses are
//! obtained through an LU factorization solve against the identity, never by
//! cofactor expansion, and every inversion carries a 1-norm condition
//! estimate so callers can reject near-singular channels.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Condition-number threshold above which a matrix is treated as singular.
pub(crate) const COND_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct NearSingular {
    /// 1-norm condition estimate at the point of failure (infinite when the
    /// factorization itself broke down).
    pub cond: f64,
}

fn norm_1(a: &DMatrix<Complex64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Invert a square complex matrix via LU. The 1-norm condition estimate
/// `cond_1 = ||A||_1 * ||A^-1||_1` gates acceptance; matrices conditioned
/// worse than [`COND_LIMIT`] are rejected with the estimate attached.
pub(crate) fn invert(a: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>, NearSingular> {
    assert_eq!(a.nrows(), a.ncols(), "invert requires a square matrix");
    let lu = a.clone().lu();
    let n = a.nrows();
    let inv = lu
        .solve(&DMatrix::<Complex64>::identity(n, n))
        .ok_or(NearSingular { cond: f64::INFINITY })?;
    let cond = norm_1(a) * norm_1(&inv);
    if !cond.is_finite() || cond > COND_LIMIT {
        return Err(NearSingular { cond });
    }
    Ok(inv)
}

/// Gram matrix `A^H A`.
pub(crate) fn gram(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a.adjoint() * a
}
