//! Cholesky factorization with an escalating-jitter fallback.
//!
//! Gram matrices with zero observation noise or near-duplicate inputs can be
//! numerically semidefinite. The policy here retries with `jitter * I` added,
//! starting at `1e-10 * mean(diag)` and growing tenfold up to `1e-4 *
//! mean(diag)` before giving up.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub struct JitteredChol {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

pub fn jittered_cholesky(mat: &DMatrix<f64>) -> Result<JitteredChol> {
    let size = mat.nrows();
    if let Some(chol) = Cholesky::new(mat.clone()) {
        return Ok(JitteredChol { chol, jitter: 0.0 });
    }
    let mean_diag = mat.diagonal().iter().map(|v| v.abs()).sum::<f64>() / size.max(1) as f64;
    let base = mean_diag.max(f64::MIN_POSITIVE);
    let mut jitter = 1e-10 * base;
    let max_jitter = 1e-4 * base;
    while jitter <= max_jitter {
        let mut jittered = mat.clone();
        for i in 0..size {
            jittered[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(jittered) {
            return Ok(JitteredChol { chol, jitter });
        }
        jitter *= 10.0;
    }
    Err(Error::IllConditionedGram {
        size,
        last_jitter: max_jitter,
    })
}

impl JitteredChol {
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// `L^{-1} v`, for quadratic forms `v^T K^{-1} v = ||L^{-1} v||^2`.
    pub fn solve_lower(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut out);
        out
    }

    pub fn ln_det(&self) -> f64 {
        self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0
    }

    /// A clean copy of the lower-triangular factor, for drawing correlated
    /// samples as `L * xi`.
    pub fn l_matrix(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pd_matrix_needs_no_jitter() {
        let mat = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let chol = jittered_cholesky(&mat).unwrap();
        assert_eq!(chol.jitter(), 0.0);
        let rhs = DVector::from_vec(vec![1.0, 2.0]);
        let sol = chol.solve(&rhs);
        let back = &mat * &sol;
        assert!((back - rhs).norm() < 1e-12);
    }

    #[test]
    fn singular_matrix_gets_jitter() {
        // rank-1: duplicated training point with zero noise
        let mat = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let chol = jittered_cholesky(&mat).unwrap();
        assert!(chol.jitter() > 0.0);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let mat = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -5.0]);
        assert!(matches!(
            jittered_cholesky(&mat),
            Err(Error::IllConditionedGram { size: 2, .. })
        ));
    }
}
