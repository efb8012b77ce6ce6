//! Cholesky factors with a jitter fallback.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric positive-definite matrix.
///
/// When the plain factorization fails, `10^-10 * mean(diag)` is added to the
/// diagonal and escalated tenfold up to `10^-6 * mean(diag)` before giving up.
#[derive(Debug, Clone)]
pub struct Factor {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl Factor {
    pub fn new(a: DMatrix<f64>, name: &str) -> Result<Self> {
        assert_eq!(a.nrows(), a.ncols(), "{name} must be square");
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization {
                matrix: format!("{name} (non-finite entries)"),
                jitter: 0.0,
            });
        }
        if let Some(chol) = Cholesky::new(a.clone()) {
            return Ok(Factor { chol, jitter: 0.0 });
        }
        let n = a.nrows();
        let scale = (0..n).map(|i| a[(i, i)]).sum::<f64>() / n.max(1) as f64;
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let mut rel = 1e-10;
        while rel <= 1e-6 * 1.000_001 {
            let mut b = a.clone();
            for i in 0..n {
                b[(i, i)] += rel * scale;
            }
            if let Some(chol) = Cholesky::new(b) {
                return Ok(Factor {
                    chol,
                    jitter: rel * scale,
                });
            }
            rel *= 10.0;
        }
        Err(Error::Factorization {
            matrix: name.to_string(),
            jitter: 1e-6 * scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Diagonal jitter that was needed (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// `L^{-1} x`.
    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        let l = self.chol.l_dirty();
        let mut y = x.clone();
        l.solve_lower_triangular_mut(&mut y);
        y
    }

    /// `x' A^{-1} x`.
    pub fn quad_inv(&self, x: &DVector<f64>) -> f64 {
        self.forward(x).norm_squared()
    }

    /// `L z`.
    pub fn lower_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        self.chol.l_dirty().lower_triangle() * z
    }

    /// `L^{-T} z`: maps standard normals to draws with covariance `A^{-1}`.
    pub fn upper_solve(&self, z: &DVector<f64>) -> DVector<f64> {
        let l = self.chol.l_dirty();
        let mut y = z.clone();
        l.tr_solve_lower_triangular_mut(&mut y);
        y
    }
}
