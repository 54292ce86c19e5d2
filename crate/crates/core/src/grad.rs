//! Gradients of the Sinkhorn distances with respect to the first histogram.
//!
//! The regularized distance has the dual potential `alpha` as its gradient. The
//! sharp distance is differentiated through the optimality conditions of the dual:
//! with the gauge `beta_m = 0`, the reduced dual Hessian is
//!
//! ```text
//!     lambda * [ diag(T 1)   Tbar            ]
//!              [ Tbar^T      diag(Tbar^T 1)  ]
//! ```
//!
//! where `Tbar` is the plan without its last column. Eliminating the `beta` block
//! leaves the `n x n` system `(D1 - Tbar D2 Tbar^T) g = f` with `D1 = diag(T 1)` and
//! `D2 = diag(Tbar^T 1)^{-1}`; its matrix is diagonal minus rank `m - 1`, so it is
//! solved through the `(m-1) x (m-1)` Schur complement `D2^{-1} - Tbar^T D1^{-1} Tbar`.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use crate::error::{OtError, Result};
use crate::linalg::Cholesky;
use crate::simplex::{CostMatrix, Histogram, InteriorHistogram, TangentVector, TransportPlan};
use crate::sinkhorn::{sinkhorn_solve, SinkhornConfig, SinkhornSolution};

/// Pivot threshold for the Cholesky factorizations in the reduced solve.
const PIVOT_TOL: f64 = 1e-15;

/// Blocks of the reduced dual Hessian (divided by `lambda`).
#[derive(Debug, Clone, PartialEq)]
pub struct HessianBlocks {
    /// `T 1_m`.
    pub d1: Array1<f64>,
    /// Plan with the last column removed, `n x (m-1)`.
    pub tbar: Array2<f64>,
    /// `Tbar^T 1_n`, the inverse of `D2`.
    pub d2inv: Array1<f64>,
    /// `b` without its last entry.
    pub reduced_b: Array1<f64>,
}

impl HessianBlocks {
    fn from_plan(t: &Array2<f64>, b: ArrayView1<'_, f64>) -> Self {
        let m = t.ncols();
        let tbar = t.slice(s![.., ..m - 1]).to_owned();
        Self {
            d1: t.sum_axis(Axis(1)),
            d2inv: tbar.sum_axis(Axis(0)),
            tbar,
            reduced_b: b.slice(s![..m - 1]).to_owned(),
        }
    }

    pub fn n(&self) -> usize {
        self.d1.len()
    }

    /// `m - 1`.
    pub fn reduced_m(&self) -> usize {
        self.d2inv.len()
    }

    /// The symmetric `(n + m - 1)`-square matrix `[diag(T1) Tbar; Tbar^T diag(Tbar^T 1)]`.
    pub fn assemble(&self) -> Array2<f64> {
        let (n, k) = (self.n(), self.reduced_m());
        let mut h = Array2::zeros((n + k, n + k));
        for i in 0..n {
            h[[i, i]] = self.d1[i];
        }
        for j in 0..k {
            h[[n + j, n + j]] = self.d2inv[j];
        }
        h.slice_mut(s![..n, n..]).assign(&self.tbar);
        h.slice_mut(s![n.., ..n]).assign(&self.tbar.t());
        h
    }

    /// The dense `n x n` matrix `D1 - Tbar D2 Tbar^T`.
    pub fn schur_matrix(&self) -> Array2<f64> {
        let scaled = &self.tbar / &self.d2inv.view().insert_axis(Axis(0));
        let mut h = -scaled.dot(&self.tbar.t());
        for i in 0..self.n() {
            h[[i, i]] += self.d1[i];
        }
        h
    }

    /// `(D1 - Tbar D2 Tbar^T) g` without forming the matrix.
    pub fn apply(&self, g: ArrayView1<'_, f64>) -> Array1<f64> {
        let w = self.tbar.t().dot(&g) / &self.d2inv;
        &self.d1 * &g - self.tbar.dot(&w)
    }
}

/// Hessian blocks of the reduced dual at a feasible plan for `(a, b)`.
pub fn dual_hessian(a: &Histogram, b: &Histogram, plan: &TransportPlan) -> Result<HessianBlocks> {
    let t = plan.entries();
    if t.dim() != (a.len(), b.len()) {
        return Err(OtError::InvalidInput(format!(
            "plan shape {:?} does not match histograms ({}, {})",
            t.dim(),
            a.len(),
            b.len()
        )));
    }
    Ok(HessianBlocks::from_plan(t, b.view()))
}

/// Solves `(D1 - Tbar D2 Tbar^T) g = f`.
///
/// When `m - 1 <= n` the solve goes through the `(m-1)`-square Schur complement
/// (Woodbury identity) at `O(n m^2)` cost; otherwise the `n x n` matrix is
/// factorized directly.
pub fn solve_reduced(blocks: &HessianBlocks, f: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let n = blocks.n();
    if f.len() != n {
        return Err(OtError::InvalidInput(format!("right-hand side has {} entries, expected {n}", f.len())));
    }
    if blocks.d1.iter().any(|d| !(*d > 0.0)) || blocks.d2inv.iter().any(|d| !(*d > 0.0)) {
        return Err(OtError::Degenerate("plan has an empty row or column".into()));
    }
    if blocks.reduced_m() <= n {
        solve_woodbury(blocks, f)
    } else {
        solve_reduced_dense(blocks, f)
    }
}

fn solve_woodbury(blocks: &HessianBlocks, f: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let y = &f / &blocks.d1;
    let k = blocks.reduced_m();
    if k == 0 {
        return Ok(y);
    }
    // S = D2^{-1} - Tbar^T D1^{-1} Tbar
    let scaled = &blocks.tbar / &blocks.d1.view().insert_axis(Axis(1));
    let mut schur = -blocks.tbar.t().dot(&scaled);
    for j in 0..k {
        schur[[j, j]] += blocks.d2inv[j];
    }
    let chol = Cholesky::factor(&schur, PIVOT_TOL)
        .map_err(|_| OtError::Degenerate("Schur complement is numerically singular".into()))?;
    let z = chol.solve(blocks.tbar.t().dot(&y).view());
    Ok(y + blocks.tbar.dot(&z) / &blocks.d1)
}

/// Direct factorization of the `n x n` reduced matrix.
pub fn solve_reduced_dense(blocks: &HessianBlocks, f: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let chol = Cholesky::factor(&blocks.schur_matrix(), PIVOT_TOL)
        .map_err(|_| OtError::Degenerate("reduced Hessian is numerically singular".into()))?;
    Ok(chol.solve(f))
}

/// Indices of the columns of `b` carrying mass; empty columns do not enter the gradient.
fn support(b: &Histogram) -> Vec<usize> {
    (0..b.len()).filter(|&j| b.weights()[j] > 0.0).collect()
}

/// Gradient of `<T, M>` in `a`, from an already solved instance.
///
/// Zero-mass columns of `b` are dropped first. Every row of the plan must carry mass.
pub fn sharp_gradient_from_solution(sol: &SinkhornSolution, cost: &CostMatrix) -> Result<TangentVector> {
    let a = sol.plan.row_marginal();
    let b = sol.plan.col_marginal();
    if !a.is_strictly_positive() {
        return Err(OtError::Degenerate("gradient requires a strictly positive first histogram".into()));
    }
    if a.len() == 1 {
        return Ok(TangentVector::project(Array1::zeros(1)));
    }
    let cols = support(b);
    let t = sol.plan.entries().select(Axis(1), &cols);
    let m = cost.entries().select(Axis(1), &cols);
    let b_sub = b.weights().select(Axis(0), &cols);
    let blocks = HessianBlocks::from_plan(&t, b_sub.view());

    let l = &t * &m;
    let k = blocks.reduced_m();
    let lbar_cols = l.slice(s![.., ..k]).sum_axis(Axis(0));
    let f = l.sum_axis(Axis(1)) - blocks.tbar.dot(&(lbar_cols / &blocks.d2inv));
    let g = solve_reduced(&blocks, f.view())?;
    if g.iter().any(|x| !x.is_finite()) {
        return Err(OtError::Degenerate("gradient solve produced non-finite values".into()));
    }
    Ok(TangentVector::project(g))
}

/// Projected dual potential, the gradient of the regularized distance in `a`.
pub fn regularized_gradient_from_solution(sol: &SinkhornSolution) -> Result<TangentVector> {
    let alpha = sol.duals.alpha();
    if alpha.iter().any(|x| !x.is_finite()) {
        return Err(OtError::Degenerate("gradient requires a strictly positive first histogram".into()));
    }
    Ok(TangentVector::project(alpha.clone()))
}

/// Gradient of the sharp Sinkhorn distance `<T_lambda, M>` with respect to `a`.
pub fn sharp_gradient(
    a: &InteriorHistogram,
    b: &Histogram,
    cost: &CostMatrix,
    cfg: &SinkhornConfig,
) -> Result<TangentVector> {
    let sol = sinkhorn_solve(a.histogram(), b, cost, cfg)?;
    sharp_gradient_from_solution(&sol, cost)
}

/// Gradient of the regularized Sinkhorn distance with respect to `a`.
pub fn regularized_gradient(
    a: &InteriorHistogram,
    b: &Histogram,
    cost: &CostMatrix,
    cfg: &SinkhornConfig,
) -> Result<TangentVector> {
    let sol = sinkhorn_solve(a.histogram(), b, cost, cfg)?;
    regularized_gradient_from_solution(&sol)
}
