//! Small dense Cholesky factorization for the symmetric positive-definite systems
//! that appear in the gradient solve and in kernel ridge regression.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{OtError, Result};

/// Lower-triangular factor `L` with `A = L L^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    factor: Array2<f64>,
}

impl Cholesky {
    /// Factorizes `a`. Fails when a pivot is not positive relative to `rel_tol * max(diag(a))`.
    pub fn factor(a: &Array2<f64>, rel_tol: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(OtError::InvalidInput(format!("matrix is {}x{}, not square", n, a.ncols())));
        }
        let scale = a.diag().iter().cloned().fold(0.0, f64::max);
        if !scale.is_finite() {
            return Err(OtError::Numerical("matrix has non-finite diagonal".into()));
        }
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if !(d > rel_tol * scale) || !d.is_finite() {
                return Err(OtError::Degenerate(format!(
                    "matrix is not numerically positive definite (pivot {j} = {d:e})"
                )));
            }
            let d = d.sqrt();
            l[[j, j]] = d;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / d;
            }
        }
        Ok(Self { factor: l })
    }

    /// Rebuilds a factorization from a stored lower-triangular factor.
    pub fn from_factor(factor: Array2<f64>) -> Result<Self> {
        if factor.nrows() != factor.ncols() {
            return Err(OtError::InvalidInput("Cholesky factor must be square".into()));
        }
        if factor.diag().iter().any(|d| !(*d > 0.0)) {
            return Err(OtError::InvalidInput("Cholesky factor must have a positive diagonal".into()));
        }
        Ok(Self { factor })
    }

    pub fn factor_matrix(&self) -> &Array2<f64> {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// Solves `A x = b` by forward and back substitution.
    pub fn solve(&self, b: ArrayView1<'_, f64>) -> Array1<f64> {
        let n = self.dim();
        let l = &self.factor;
        let mut y = b.to_owned();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[[i, k]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        y
    }
}
