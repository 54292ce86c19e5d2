//! Histograms, cost matrices, couplings and the simplex geometry they live on.
//!
//! Every value type here validates its invariants at construction and is
//! immutable afterwards, so a `Histogram` in hand is always a point of the
//! probability simplex (up to [`HISTOGRAM_TOL`]).

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{OtError, Result};

/// Absolute tolerance on `sum(weights) == 1` accepted by [`Histogram::new`].
pub const HISTOGRAM_TOL: f64 = 1e-12;

/// Tolerance on `sum(components) == 0` for tangent vectors, relative to `max(1, |v|_1)`.
pub const TANGENT_TOL: f64 = 1e-10;

/// A point of the probability simplex: nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    weights: Array1<f64>,
}

impl Histogram {
    /// Validates `weights` without renormalizing them.
    pub fn new(weights: impl Into<Array1<f64>>) -> Result<Self> {
        let weights = weights.into();
        if weights.is_empty() {
            return Err(OtError::InvalidInput("histogram must have at least one bin".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(OtError::InvalidInput(format!("histogram entries must be finite and nonnegative, found {w}")));
        }
        let total = weights.sum();
        if (total - 1.0).abs() > HISTOGRAM_TOL {
            return Err(OtError::InvalidInput(format!(
                "histogram sums to {total:.15}, expected 1 within {HISTOGRAM_TOL:e}"
            )));
        }
        Ok(Self { weights })
    }

    /// Divides nonnegative `weights` by their sum.
    pub fn normalized(weights: impl Into<Array1<f64>>) -> Result<Self> {
        let weights = weights.into();
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(OtError::InvalidInput("cannot normalize: entries must be finite and nonnegative".into()));
        }
        let total = weights.sum();
        if total <= 0.0 {
            return Err(OtError::InvalidInput("cannot normalize an all-zero vector".into()));
        }
        Self::new(weights / total)
    }

    /// Accepts weights whose sum is off by at most `tol` (e.g. after a decimal
    /// round trip) and renormalizes them.
    pub fn from_rounded(weights: impl Into<Array1<f64>>, tol: f64) -> Result<Self> {
        let weights = weights.into();
        let total = weights.sum();
        if (total - 1.0).abs() > tol {
            return Err(OtError::InvalidInput(format!("histogram sums to {total:.15}, expected 1 within {tol:e}")));
        }
        Self::normalized(weights)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(OtError::InvalidInput("histogram must have at least one bin".into()));
        }
        Ok(Self { weights: Array1::from_elem(n, 1.0 / n as f64) })
    }

    /// A point mass on bin `index` of an `n`-bin support.
    pub fn dirac(n: usize, index: usize) -> Result<Self> {
        if index >= n {
            return Err(OtError::InvalidInput(format!("bin {index} out of range for {n} bins")));
        }
        let mut w = Array1::zeros(n);
        w[index] = 1.0;
        Ok(Self { weights: w })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.weights
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.weights.iter().all(|w| *w > 0.0)
    }

    pub fn l1_distance(&self, other: &Histogram) -> f64 {
        self.weights.iter().zip(other.weights.iter()).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// A histogram bounded away from the simplex boundary: every weight is at least `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorHistogram {
    hist: Histogram,
    epsilon: f64,
}

impl InteriorHistogram {
    pub fn new(hist: Histogram, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon, hist.len())?;
        if let Some(w) = hist.weights.iter().find(|w| **w < epsilon) {
            return Err(OtError::InvalidInput(format!("entry {w:e} is below the interior bound {epsilon:e}")));
        }
        Ok(Self { hist, epsilon })
    }

    /// Wraps a strictly positive histogram using its smallest entry as the bound.
    pub fn from_positive(hist: Histogram) -> Result<Self> {
        let min = hist.weights.iter().cloned().fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            return Err(OtError::InvalidInput("histogram is not strictly positive".into()));
        }
        let n = hist.len() as f64;
        // A singleton has min == 1 == 1/n; any epsilon in (0, 1/n) then works.
        let epsilon = if min >= 1.0 / n { 0.5 / n } else { min };
        Self::new(hist, epsilon)
    }

    pub fn histogram(&self) -> &Histogram {
        &self.hist
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.hist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hist.is_empty()
    }

    pub fn weights(&self) -> &Array1<f64> {
        self.hist.weights()
    }

    pub fn into_histogram(self) -> Histogram {
        self.hist
    }
}

fn check_epsilon(epsilon: f64, n: usize) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0 / n as f64) {
        return Err(OtError::InvalidParameter(format!(
            "interior bound must lie in (0, 1/n) = (0, {}), got {epsilon}",
            1.0 / n as f64
        )));
    }
    Ok(())
}

/// Nonnegative, finite ground-cost matrix between an `n`-point and an `m`-point support.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Array2<f64>,
}

impl CostMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(OtError::InvalidInput("cost matrix must be non-empty".into()));
        }
        if let Some(c) = entries.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(OtError::InvalidInput(format!("cost entries must be finite and nonnegative, found {c}")));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().cloned().fold(0.0, f64::max)
    }

    /// Column `j` as an `n`-vector.
    pub fn column(&self, j: usize) -> Array1<f64> {
        self.entries.column(j).to_owned()
    }

    /// Adds `c` to every entry (`c` may be negative as long as entries stay nonnegative).
    pub fn shifted(&self, c: f64) -> Result<Self> {
        Self::new(self.entries.mapv(|x| x + c))
    }

    /// Keeps only the listed columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self { entries: self.entries.select(Axis(1), cols) }
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.entries
    }
}

/// A coupling of `row_marginal` and `col_marginal`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    entries: Array2<f64>,
    row_marginal: Histogram,
    col_marginal: Histogram,
    tolerance: f64,
}

impl TransportPlan {
    /// Checks nonnegativity and that the L1 marginal violation is at most `tolerance`.
    pub fn new(entries: Array2<f64>, row_marginal: Histogram, col_marginal: Histogram, tolerance: f64) -> Result<Self> {
        if entries.dim() != (row_marginal.len(), col_marginal.len()) {
            return Err(OtError::InvalidInput(format!(
                "plan shape {:?} does not match marginals ({}, {})",
                entries.dim(),
                row_marginal.len(),
                col_marginal.len()
            )));
        }
        if entries.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(OtError::InvalidInput("plan entries must be finite and nonnegative".into()));
        }
        let residual = marginal_residual(&entries, row_marginal.weights(), col_marginal.weights());
        if residual > tolerance {
            return Err(OtError::InvalidInput(format!("plan violates its marginals by {residual:e} > {tolerance:e}")));
        }
        Ok(Self { entries, row_marginal, col_marginal, tolerance })
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn row_marginal(&self) -> &Histogram {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &Histogram {
        &self.col_marginal
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// `|T 1 - a|_1 + |T^T 1 - b|_1`.
    pub fn residual(&self) -> f64 {
        marginal_residual(&self.entries, self.row_marginal.weights(), self.col_marginal.weights())
    }

    /// Frobenius product with a cost matrix.
    pub fn cost(&self, cost: &CostMatrix) -> f64 {
        frobenius(&self.entries, cost.entries())
    }

    pub fn nonzeros(&self) -> usize {
        self.entries.iter().filter(|t| **t > 0.0).count()
    }
}

pub(crate) fn marginal_residual(t: &Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let rows = t.sum_axis(Axis(1));
    let cols = t.sum_axis(Axis(0));
    let r: f64 = rows.iter().zip(a.iter()).map(|(x, y)| (x - y).abs()).sum();
    let c: f64 = cols.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum();
    r + c
}

pub(crate) fn frobenius(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| a * b).sum()
}

/// A direction in the tangent space of the simplex (components sum to zero).
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    components: Array1<f64>,
}

impl TangentVector {
    pub fn new(components: impl Into<Array1<f64>>) -> Result<Self> {
        let components = components.into();
        let scale = components.iter().map(|c| c.abs()).sum::<f64>().max(1.0);
        let total = components.sum();
        if !total.is_finite() || total.abs() > TANGENT_TOL * scale {
            return Err(OtError::InvalidInput(format!("tangent vector components sum to {total:e}, expected 0")));
        }
        Ok(Self { components })
    }

    /// Orthogonal projection onto `{x : sum x = 0}`: subtracts the mean.
    pub fn project(v: impl Into<Array1<f64>>) -> Self {
        let mut components = v.into();
        if !components.is_empty() {
            let mean = components.sum() / components.len() as f64;
            components.mapv_inplace(|x| x - mean);
        }
        Self { components }
    }

    pub fn components(&self) -> &Array1<f64> {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dot(&self, v: &Array1<f64>) -> f64 {
        self.components.dot(v)
    }

    pub fn norm(&self) -> f64 {
        self.components.dot(&self.components).sqrt()
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.components
    }
}

/// Euclidean projection onto the probability simplex by sort-and-threshold.
pub fn simplex_project(v: ArrayView1<'_, f64>) -> Result<Histogram> {
    if v.is_empty() {
        return Err(OtError::InvalidInput("cannot project an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(OtError::InvalidInput("cannot project a non-finite vector".into()));
    }
    // Points already on the simplex are returned untouched, making the map idempotent.
    if v.iter().all(|x| *x >= 0.0) && (v.sum() - 1.0).abs() <= HISTOGRAM_TOL {
        return Ok(Histogram { weights: v.to_owned() });
    }
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    let mut p = v.mapv(|x| (x - theta).max(0.0));
    // Absorb the rounding error of the threshold into the largest coordinate.
    let drift = p.sum() - 1.0;
    if drift != 0.0 {
        let imax = argmax(p.view());
        p[imax] = (p[imax] - drift).max(0.0);
    }
    Histogram::new(p)
}

/// Euclidean projection onto `{p in simplex : p_i >= epsilon}`.
///
/// The set is the simplex scaled by `1 - n*epsilon` and shifted by `epsilon`, so the
/// projection reduces to [`simplex_project`]. Inputs already in the set come back unchanged.
pub fn clip_to_interior(p: &Histogram, epsilon: f64) -> Result<InteriorHistogram> {
    project_to_interior(p.view(), epsilon)
}

/// Same as [`clip_to_interior`] for an arbitrary finite vector.
pub fn project_to_interior(v: ArrayView1<'_, f64>, epsilon: f64) -> Result<InteriorHistogram> {
    let n = v.len();
    if n == 0 {
        return Err(OtError::InvalidInput("cannot project an empty vector".into()));
    }
    check_epsilon(epsilon, n)?;
    if v.iter().all(|x| *x >= epsilon) && (v.sum() - 1.0).abs() <= HISTOGRAM_TOL {
        return InteriorHistogram::new(Histogram { weights: v.to_owned() }, epsilon);
    }
    let scale = 1.0 - n as f64 * epsilon;
    let shrunk = v.mapv(|x| (x - epsilon) / scale);
    let base = simplex_project(shrunk.view())?;
    let q = base.weights.mapv(|x| epsilon + scale * x);
    let hist = Histogram::new(q).or_else(|_| {
        // n*epsilon rounding can push the sum just past the tolerance; fix the largest entry.
        let mut q = base.weights.mapv(|x| epsilon + scale * x);
        let drift = q.sum() - 1.0;
        let imax = argmax(q.view());
        q[imax] -= drift;
        Histogram::new(q)
    })?;
    InteriorHistogram::new(hist, epsilon)
}

/// Pairwise cost `|x_i - y_j|_2^p` between the rows of `xs` and the rows of `ys`.
pub fn cost_from_points(xs: &Array2<f64>, ys: &Array2<f64>, p: f64) -> Result<CostMatrix> {
    if xs.nrows() == 0 || ys.nrows() == 0 {
        return Err(OtError::InvalidInput("point lists must be non-empty".into()));
    }
    if xs.ncols() != ys.ncols() {
        return Err(OtError::InvalidInput(format!("point dimensions differ: {} vs {}", xs.ncols(), ys.ncols())));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(OtError::InvalidParameter(format!("cost exponent must be >= 1, got {p}")));
    }
    if xs.iter().chain(ys.iter()).any(|x| !x.is_finite()) {
        return Err(OtError::InvalidInput("points must be finite".into()));
    }
    let mut m = Array2::zeros((xs.nrows(), ys.nrows()));
    for (i, x) in xs.outer_iter().enumerate() {
        for (j, y) in ys.outer_iter().enumerate() {
            let d2: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            m[[i, j]] = if p == 2.0 { d2 } else { d2.sqrt().powf(p) };
        }
    }
    CostMatrix::new(m)
}

/// Squared-distance cost between integer grid points `0..n` and `0..m`.
pub fn grid_cost_1d(n: usize, m: usize) -> Result<CostMatrix> {
    let xs = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
    let ys = Array2::from_shape_fn((m, 1), |(j, _)| j as f64);
    cost_from_points(&xs, &ys, 2.0)
}

/// `h(T) = -sum T_ij (log T_ij - 1)` with `0 log 0 = 0`.
pub fn entropy(plan: &TransportPlan) -> f64 {
    entropy_of(plan.entries())
}

pub(crate) fn entropy_of(t: &Array2<f64>) -> f64 {
    -t.iter().filter(|x| **x > 0.0).map(|x| x * (x.ln() - 1.0)).sum::<f64>()
}

pub(crate) fn argmax(v: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn histogram_rejects_bad_sums_and_signs() {
        assert!(Histogram::new(array![0.5, 0.5]).is_ok());
        assert!(Histogram::new(array![0.5, 0.6]).is_err());
        assert!(Histogram::new(array![1.5, -0.5]).is_err());
        assert!(Histogram::new(Array1::<f64>::zeros(0)).is_err());
        assert!(Histogram::new(array![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn project_fixed_points_and_vertices() {
        let p = simplex_project(array![0.3, 0.7].view()).unwrap();
        assert_eq!(p.weights(), &array![0.3, 0.7]);
        let p = simplex_project(array![2.0, 0.0].view()).unwrap();
        assert_eq!(p.weights(), &array![1.0, 0.0]);
        assert!(simplex_project(array![f64::INFINITY, 0.0].view()).is_err());
    }

    #[test]
    fn project_matches_grid_search() {
        // Brute force over a step-1e-3 grid of the 2-simplex embedded in R^3 is too
        // coarse for 5 coordinates, so the 5-d oracle lives in the integration tests;
        // here a 3-d check with an exhaustive grid.
        let v = array![0.9, -0.4, 0.35];
        let p = simplex_project(v.view()).unwrap();
        let step = 1e-3;
        let k = (1.0 / step) as usize;
        let mut best = (f64::INFINITY, [0.0; 3]);
        for i in 0..=k {
            for j in 0..=(k - i) {
                let q = [i as f64 * step, j as f64 * step, (k - i - j) as f64 * step];
                let d: f64 = q.iter().zip(v.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, q);
                }
            }
        }
        for c in 0..3 {
            assert!((p.weights()[c] - best.1[c]).abs() <= 2e-3);
        }
    }

    #[test]
    fn clip_examples() {
        let u = Histogram::uniform(4).unwrap();
        let c = clip_to_interior(&u, 0.1).unwrap();
        assert_eq!(c.weights(), u.weights());

        let p = Histogram::new(array![1.0, 0.0]).unwrap();
        let c = clip_to_interior(&p, 0.1).unwrap();
        assert!((c.weights()[0] - 0.9).abs() < 1e-12);
        assert!((c.weights()[1] - 0.1).abs() < 1e-12);

        let p = Histogram::new(array![0.5, 0.5]).unwrap();
        let c = clip_to_interior(&p, 0.2).unwrap();
        assert_eq!(c.weights(), &array![0.5, 0.5]);

        assert!(matches!(clip_to_interior(&p, 0.5), Err(OtError::InvalidParameter(_))));
        assert!(matches!(clip_to_interior(&p, 0.0), Err(OtError::InvalidParameter(_))));
    }

    #[test]
    fn cost_examples() {
        let xs = array![[0.0], [1.0]];
        let m = cost_from_points(&xs, &xs, 2.0).unwrap();
        assert_eq!(m.entries(), &array![[0.0, 1.0], [1.0, 0.0]]);
        let m = cost_from_points(&array![[0.0]], &array![[20.0]], 2.0).unwrap();
        assert_eq!(m.entries(), &array![[400.0]]);
        let empty = Array2::<f64>::zeros((0, 1));
        assert!(cost_from_points(&empty, &xs, 2.0).is_err());
        assert!(cost_from_points(&xs, &xs, 0.5).is_err());
    }

    #[test]
    fn cost_p1_matches_euclidean() {
        let xs = array![[0.0, 0.0], [3.0, 4.0], [-1.0, 2.0]];
        let m = cost_from_points(&xs, &xs, 1.0).unwrap();
        assert!((m.entries()[[0, 1]] - 5.0).abs() < 1e-12);
        assert!((m.entries()[[1, 2]] - (16.0f64 + 4.0).sqrt()).abs() < 1e-12);
        assert!((m.entries()[[0, 2]] - 5.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn entropy_examples() {
        let one = Histogram::new(array![1.0]).unwrap();
        let plan = TransportPlan::new(array![[1.0]], one.clone(), one.clone(), 1e-12).unwrap();
        assert!((entropy(&plan) - 1.0).abs() < 1e-15);

        let half = Histogram::new(array![0.5, 0.5]).unwrap();
        let plan = TransportPlan::new(array![[0.5, 0.5]], one, half, 1e-12).unwrap();
        assert!((entropy(&plan) - (1.0 + 2f64.ln())).abs() < 1e-12);

        // 0 log 0 = 0
        assert_eq!(entropy_of(&array![[1.0, 0.0]]), 1.0);
    }

    #[test]
    fn plan_rejects_marginal_violation() {
        let a = Histogram::new(array![0.5, 0.5]).unwrap();
        let t = array![[0.5, 0.0], [0.0, 0.4]];
        assert!(TransportPlan::new(t, a.clone(), a, 1e-6).is_err());
    }

    #[test]
    fn tangent_projection_sums_to_zero() {
        let t = TangentVector::project(array![1.0, 2.0, 6.0]);
        assert!(t.components().sum().abs() < 1e-15);
        assert!(TangentVector::new(array![1.0, 1.0]).is_err());
        assert!(TangentVector::project(array![5.0]).components()[0] == 0.0);
    }
}
