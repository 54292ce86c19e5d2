//! Exact discrete optimal transport for small instances.
//!
//! A transportation simplex on the `n x m` tableau: north-west corner start,
//! potentials from the basis spanning tree, Bland's rule for both the entering and
//! the leaving cell. The result carries a certificate that the final potentials are
//! dual feasible, i.e. that the plan is a global optimum.

use std::collections::VecDeque;

use ndarray::Array2;

use crate::error::{OtError, Result};
use crate::simplex::{CostMatrix, Histogram, TransportPlan};

/// Largest `n * m` accepted by [`exact_wasserstein`].
pub const MAX_CELLS: usize = 2500;

/// Marginal tolerance attached to exact plans.
pub const EXACT_PLAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub value: f64,
    pub plan: TransportPlan,
    /// All reduced costs are nonnegative at the returned basis.
    pub certified: bool,
}

struct Tableau<'a> {
    n: usize,
    m: usize,
    cost: &'a Array2<f64>,
    flow: Array2<f64>,
    basic: Vec<bool>,
    basis: Vec<(usize, usize)>,
}

impl<'a> Tableau<'a> {
    fn north_west(a: &Histogram, b: &Histogram, cost: &'a Array2<f64>) -> Self {
        let (n, m) = cost.dim();
        let mut supply = a.weights().to_vec();
        let mut demand = b.weights().to_vec();
        let mut flow = Array2::zeros((n, m));
        let mut basic = vec![false; n * m];
        let mut basis = Vec::with_capacity(n + m - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let x = supply[i].min(demand[j]).max(0.0);
            flow[[i, j]] = x;
            basic[i * m + j] = true;
            basis.push((i, j));
            supply[i] -= x;
            demand[j] -= x;
            if i == n - 1 && j == m - 1 {
                break;
            }
            // Each step advances exactly one index, so the basis has n + m - 1 cells
            // and forms a spanning tree even under degeneracy.
            if j == m - 1 || (i < n - 1 && supply[i] <= demand[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self { n, m, cost, flow, basic, basis }
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n + self.m];
        for &(i, j) in &self.basis {
            adj[i].push(self.n + j);
            adj[self.n + j].push(i);
        }
        adj
    }

    fn potentials(&self, adj: &[Vec<usize>]) -> (Vec<f64>, Vec<f64>) {
        let mut u = vec![f64::NAN; self.n];
        let mut v = vec![f64::NAN; self.m];
        u[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(node) = queue.pop_front() {
            for &next in &adj[node] {
                if node < self.n {
                    let j = next - self.n;
                    if v[j].is_nan() {
                        v[j] = self.cost[[node, j]] - u[node];
                        queue.push_back(next);
                    }
                } else {
                    let j = node - self.n;
                    if u[next].is_nan() {
                        u[next] = self.cost[[next, j]] - v[j];
                        queue.push_back(next);
                    }
                }
            }
        }
        (u, v)
    }

    /// First non-basic cell (row-major) with reduced cost below `-tol`.
    fn entering(&self, u: &[f64], v: &[f64], tol: f64) -> Option<(usize, usize)> {
        for (i, ui) in u.iter().enumerate() {
            for (j, vj) in v.iter().enumerate() {
                if !self.basic[i * self.m + j] && self.cost[[i, j]] - ui - vj < -tol {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Tree path from row node `i` to column node `j`, as a list of basic cells.
    fn path(&self, adj: &[Vec<usize>], i: usize, j: usize) -> Vec<(usize, usize)> {
        let target = self.n + j;
        let mut parent = vec![usize::MAX; self.n + self.m];
        parent[i] = i;
        let mut queue = VecDeque::from([i]);
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &next in &adj[node] {
                if parent[next] == usize::MAX {
                    parent[next] = node;
                    queue.push_back(next);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = target;
        while node != i {
            let prev = parent[node];
            let cell = if node < self.n { (node, prev - self.n) } else { (prev, node - self.n) };
            cells.push(cell);
            node = prev;
        }
        // cells run from the column end back to row i
        cells
    }

    fn pivot(&mut self, enter: (usize, usize), adj: &[Vec<usize>]) {
        let path = self.path(adj, enter.0, enter.1);
        // Walking back from column j, path cells alternate -, +, -, ... ending with - at row i.
        let minus: Vec<(usize, usize)> = path.iter().step_by(2).cloned().collect();
        let plus: Vec<(usize, usize)> = path.iter().skip(1).step_by(2).cloned().collect();
        let theta = minus.iter().map(|&(r, c)| self.flow[[r, c]]).fold(f64::INFINITY, f64::min);
        let leave = minus
            .iter()
            .filter(|&&(r, c)| self.flow[[r, c]] == theta)
            .min_by_key(|&&(r, c)| r * self.m + c)
            .cloned()
            .expect("cycle has at least one decreasing cell");
        for &(r, c) in &plus {
            self.flow[[r, c]] += theta;
        }
        for &(r, c) in &minus {
            self.flow[[r, c]] = (self.flow[[r, c]] - theta).max(0.0);
        }
        self.flow[[enter.0, enter.1]] = theta;
        self.flow[[leave.0, leave.1]] = 0.0;
        self.basic[leave.0 * self.m + leave.1] = false;
        self.basic[enter.0 * self.m + enter.1] = true;
        let pos = self.basis.iter().position(|&c| c == leave).expect("leaving cell is basic");
        self.basis[pos] = enter;
    }
}

/// Exact optimum of `min <T, M>` over couplings of `a` and `b`.
pub fn exact_wasserstein(a: &Histogram, b: &Histogram, cost: &CostMatrix) -> Result<ExactSolution> {
    let (n, m) = (cost.nrows(), cost.ncols());
    if a.len() != n || b.len() != m {
        return Err(OtError::InvalidInput(format!(
            "cost matrix is {n}x{m} but histograms have {} and {} bins",
            a.len(),
            b.len()
        )));
    }
    if n * m > MAX_CELLS {
        return Err(OtError::OutOfScale { size: n * m, limit: MAX_CELLS });
    }
    let tol = 1e-12 * cost.max().max(1.0);
    let mut tableau = Tableau::north_west(a, b, cost.entries());
    let max_pivots = 50 * n * m + 100;
    let mut certified = false;
    for _ in 0..max_pivots {
        let adj = tableau.adjacency();
        let (u, v) = tableau.potentials(&adj);
        match tableau.entering(&u, &v, tol) {
            Some(cell) => tableau.pivot(cell, &adj),
            None => {
                certified = true;
                break;
            }
        }
    }
    if !certified {
        return Err(OtError::Numerical(format!("transportation simplex exceeded {max_pivots} pivots")));
    }
    let plan = TransportPlan::new(tableau.flow, a.clone(), b.clone(), EXACT_PLAN_TOL)?;
    let value = plan.cost(cost);
    Ok(ExactSolution { value, plan, certified })
}

/// Closed-form `W_1` on the real line: the L1 distance between cumulative distribution functions.
pub fn wasserstein_1d(xs: &[f64], a: &Histogram, ys: &[f64], b: &Histogram) -> Result<f64> {
    if xs.len() != a.len() || ys.len() != b.len() {
        return Err(OtError::InvalidInput("support sizes do not match histogram lengths".into()));
    }
    if xs.iter().chain(ys.iter()).any(|x| !x.is_finite()) {
        return Err(OtError::InvalidInput("support points must be finite".into()));
    }
    let mut events: Vec<(f64, f64)> = xs
        .iter()
        .zip(a.weights().iter())
        .map(|(x, w)| (*x, *w))
        .chain(ys.iter().zip(b.weights().iter()).map(|(y, w)| (*y, -*w)))
        .collect();
    events.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut cdf_gap = 0.0;
    let mut total = 0.0;
    for k in 0..events.len() {
        cdf_gap += events[k].1;
        if k + 1 < events.len() {
            total += cdf_gap.abs() * (events[k + 1].0 - events[k].0);
        }
    }
    Ok(total)
}
