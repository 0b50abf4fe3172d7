//! Cholesky factorization with diagonal jitter escalation, and PSD checks.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// First jitter tried, relative to the reference variance.
pub const JITTER_START: f64 = 1e-10;
/// Largest relative jitter before giving up.
pub const JITTER_MAX: f64 = 1e-6;

/// A Cholesky factor together with the jitter that had to be added.
#[derive(Debug, Clone)]
pub struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

/// Factorizes `m`, adding `scale·1e-10` to the diagonal and escalating ×10 up
/// to `scale·1e-6` if the plain factorization fails.
pub fn cholesky_with_jitter(m: &DMatrix<f64>, scale: f64) -> Option<Factor> {
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Some(Factor { chol, jitter: 0.0 });
    }
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * scale;
        let mut shifted = m.clone();
        for i in 0..m.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(shifted) {
            return Some(Factor { chol, jitter });
        }
        rel *= 10.0;
    }
    None
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Errors with `NotPsd` when the smallest eigenvalue is below `-tol`.
pub fn check_psd(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    let min = min_eigenvalue(m);
    if min < -tol {
        Err(Error::NotPsd(min))
    } else {
        Ok(())
    }
}
