//! Entropic optimal transport by Sinkhorn scaling, and the two Sinkhorn distances
//! derived from the entropic plan.
//!
//! The solver works on potentials `(alpha, beta)` so that the returned plan is always
//! `T_ij = exp(lambda * (alpha_i + beta_j - M_ij))`. Linear-domain iterations scale
//! the Gibbs kernel directly; log-domain iterations use log-sum-exp updates and
//! survive kernels that underflow. Bins with zero mass are removed before iterating
//! and receive `-inf` potentials (zero rows or columns in the plan).

use ndarray::{Array1, Array2, Axis};

use crate::error::{OtError, Result};
use crate::simplex::{entropy_of, CostMatrix, Histogram, TransportPlan};

/// Above this regularization strength `Auto` mode switches to log-domain iterations.
pub const LOG_DOMAIN_LAMBDA: f64 = 30.0;

/// `Auto` also switches when `lambda * max(M)` exceeds this, since `exp(-lambda M)`
/// then spans more than the usable f64 range once scaled.
const LINEAR_EXPONENT_LIMIT: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DomainMode {
    #[default]
    Auto,
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    /// Inverse weight of the entropy term.
    pub lambda: f64,
    pub max_iter: usize,
    /// Stop once `|T 1 - a|_1 + |T^T 1 - b|_1` is at most this.
    pub marginal_tol: f64,
    pub domain: DomainMode,
}

impl SinkhornConfig {
    /// `max_iter = 1000`, `marginal_tol = 1e-6`, automatic domain selection.
    pub fn new(lambda: f64) -> Result<Self> {
        let cfg = Self { lambda, max_iter: 1000, marginal_tol: 1e-6, domain: DomainMode::Auto };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_tol(mut self, marginal_tol: f64) -> Self {
        self.marginal_tol = marginal_tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_domain(mut self, domain: DomainMode) -> Self {
        self.domain = domain;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(OtError::InvalidParameter(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.marginal_tol > 0.0) {
            return Err(OtError::InvalidParameter(format!(
                "marginal tolerance must be positive, got {}",
                self.marginal_tol
            )));
        }
        if self.max_iter == 0 {
            return Err(OtError::InvalidParameter("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Dual solution under the gauge `beta[gauge_column] = 0`.
///
/// The gauge column is the last column carrying mass, i.e. `m - 1` whenever `b_m > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentials {
    alpha: Array1<f64>,
    beta: Array1<f64>,
    gauge_column: usize,
}

impl DualPotentials {
    pub fn alpha(&self) -> &Array1<f64> {
        &self.alpha
    }

    pub fn beta(&self) -> &Array1<f64> {
        &self.beta
    }

    pub fn gauge_column(&self) -> usize {
        self.gauge_column
    }

    /// `diag(e^{lambda alpha}) e^{-lambda M} diag(e^{lambda beta})`.
    pub fn plan_entries(&self, cost: &CostMatrix, lambda: f64) -> Array2<f64> {
        gibbs_plan(&self.alpha, &self.beta, cost.entries(), lambda)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornSolution {
    pub plan: TransportPlan,
    pub duals: DualPotentials,
    pub iterations: usize,
    /// Final L1 marginal violation of `plan`.
    pub residual: f64,
    pub log_domain: bool,
}

impl SinkhornSolution {
    /// `<T, M>`.
    pub fn sharp_value(&self, cost: &CostMatrix) -> f64 {
        self.plan.cost(cost)
    }

    /// `<T, M> - h(T) / lambda`.
    pub fn regularized_value(&self, cost: &CostMatrix, lambda: f64) -> f64 {
        self.plan.cost(cost) - entropy_of(self.plan.entries()) / lambda
    }
}

fn gibbs_plan(alpha: &Array1<f64>, beta: &Array1<f64>, m: &Array2<f64>, lambda: f64) -> Array2<f64> {
    Array2::from_shape_fn(m.dim(), |(i, j)| {
        let (a, b) = (alpha[i], beta[j]);
        if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
            0.0
        } else {
            (lambda * (a + b - m[[i, j]])).exp()
        }
    })
}

fn check_dims(a: &Histogram, b: &Histogram, cost: &CostMatrix) -> Result<()> {
    if cost.nrows() != a.len() || cost.ncols() != b.len() {
        return Err(OtError::InvalidInput(format!(
            "cost matrix is {}x{} but histograms have {} and {} bins",
            cost.nrows(),
            cost.ncols(),
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Whether `cfg` resolves to log-domain iterations on this instance.
pub fn uses_log_domain(a: &Histogram, b: &Histogram, cost: &CostMatrix, cfg: &SinkhornConfig) -> bool {
    match cfg.domain {
        DomainMode::Log => true,
        DomainMode::Linear => false,
        DomainMode::Auto => {
            cfg.lambda > LOG_DOMAIN_LAMBDA
                || cfg.lambda * cost.max() > LINEAR_EXPONENT_LIMIT
                || !a.is_strictly_positive()
                || !b.is_strictly_positive()
        }
    }
}

/// Solves the entropic transport problem between `a` and `b`.
pub fn sinkhorn_solve(
    a: &Histogram,
    b: &Histogram,
    cost: &CostMatrix,
    cfg: &SinkhornConfig,
) -> Result<SinkhornSolution> {
    sinkhorn_solve_warm(a, b, cost, cfg, None)
}

/// As [`sinkhorn_solve`], starting from previously computed potentials.
///
/// A warm start only changes the iteration count; the stopping rule is the same.
pub fn sinkhorn_solve_warm(
    a: &Histogram,
    b: &Histogram,
    cost: &CostMatrix,
    cfg: &SinkhornConfig,
    init: Option<&DualPotentials>,
) -> Result<SinkhornSolution> {
    cfg.validate()?;
    check_dims(a, b, cost)?;
    let log_domain = uses_log_domain(a, b, cost, cfg);
    if !log_domain && (!a.is_strictly_positive() || !b.is_strictly_positive()) {
        return Err(OtError::InvalidInput("zero-mass bins require log-domain iterations".into()));
    }

    let rows: Vec<usize> = (0..a.len()).filter(|&i| a.weights()[i] > 0.0).collect();
    let cols: Vec<usize> = (0..b.len()).filter(|&j| b.weights()[j] > 0.0).collect();
    let a_sub = a.weights().select(Axis(0), &rows);
    let b_sub = b.weights().select(Axis(0), &cols);
    let m_sub = cost.entries().select(Axis(0), &rows).select(Axis(1), &cols);
    let lambda = cfg.lambda;

    let (alpha0, beta0) = match init {
        Some(d) if d.alpha.len() == a.len() && d.beta.len() == b.len() => {
            let al = d.alpha.select(Axis(0), &rows);
            let be = d.beta.select(Axis(0), &cols);
            if al.iter().chain(be.iter()).all(|x| x.is_finite()) {
                (al, be)
            } else {
                (Array1::zeros(rows.len()), Array1::zeros(cols.len()))
            }
        }
        _ => (Array1::zeros(rows.len()), Array1::zeros(cols.len())),
    };

    let (mut alpha, mut beta, iterations, converged, last_residual) = if log_domain {
        iterate_log(&a_sub, &b_sub, &m_sub, lambda, cfg, alpha0, beta0)
    } else {
        iterate_linear(&a_sub, &b_sub, &m_sub, lambda, cfg, alpha0, beta0)?
    };
    if !converged {
        return Err(OtError::NonConvergence { iterations, residual: last_residual });
    }

    let shift = beta[beta.len() - 1];
    alpha.mapv_inplace(|x| x + shift);
    beta.mapv_inplace(|x| x - shift);

    let mut alpha_full = Array1::from_elem(a.len(), f64::NEG_INFINITY);
    let mut beta_full = Array1::from_elem(b.len(), f64::NEG_INFINITY);
    for (k, &i) in rows.iter().enumerate() {
        alpha_full[i] = alpha[k];
    }
    for (k, &j) in cols.iter().enumerate() {
        beta_full[j] = beta[k];
    }
    let duals = DualPotentials { alpha: alpha_full, beta: beta_full, gauge_column: cols[cols.len() - 1] };
    let entries = duals.plan_entries(cost, lambda);
    if entries.iter().any(|t| !t.is_finite()) {
        return Err(OtError::NumericalOverflow("plan entries are not finite".into()));
    }
    let plan = TransportPlan::new(entries, a.clone(), b.clone(), f64::INFINITY)?;
    let residual = plan.residual();
    // rebuilding the plan from shifted potentials costs a few ulps per entry
    let tol = cfg.marginal_tol + 64.0 * f64::EPSILON * (a.len() + b.len()) as f64;
    if residual > tol {
        return Err(OtError::NonConvergence { iterations, residual });
    }
    let plan = TransportPlan::new(plan.entries().clone(), a.clone(), b.clone(), tol)?;
    Ok(SinkhornSolution { plan, duals, iterations, residual, log_domain })
}

type IterOutcome = (Array1<f64>, Array1<f64>, usize, bool, f64);

fn iterate_linear(
    a: &Array1<f64>,
    b: &Array1<f64>,
    m: &Array2<f64>,
    lambda: f64,
    cfg: &SinkhornConfig,
    alpha0: Array1<f64>,
    beta0: Array1<f64>,
) -> Result<IterOutcome> {
    let k = m.mapv(|c| (-lambda * c).exp());
    let mut u = alpha0.mapv(|x| (lambda * x).exp());
    let mut v = beta0.mapv(|x| (lambda * x).exp());
    let mut residual = f64::INFINITY;
    let overflow = |what: &str| OtError::NumericalOverflow(format!("{what} scaling left the f64 range"));
    // K v is shared by the residual of one sweep and the row update of the next.
    let mut kv = k.dot(&v);
    for it in 1..=cfg.max_iter {
        u = a / &kv;
        let ktu = k.t().dot(&u);
        v = b / &ktu;
        if u.iter().chain(v.iter()).any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(overflow(if u.iter().all(|x| x.is_finite() && *x > 0.0) { "column" } else { "row" }));
        }
        // Columns are exact after the v-update; only rows can be violated.
        kv = k.dot(&v);
        residual = u.iter().zip(kv.iter()).zip(a.iter()).map(|((ui, r), t)| (ui * r - t).abs()).sum();
        if residual <= cfg.marginal_tol {
            let alpha = u.mapv(|x| x.ln() / lambda);
            let beta = v.mapv(|x| x.ln() / lambda);
            return Ok((alpha, beta, it, true, residual));
        }
    }
    let alpha = u.mapv(|x| x.ln() / lambda);
    let beta = v.mapv(|x| x.ln() / lambda);
    Ok((alpha, beta, cfg.max_iter, false, residual))
}

pub(crate) fn log_sum_exp<I: Iterator<Item = f64> + Clone>(xs: I) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `lse_i = log sum_j exp(g_j - c_ij)` for every row `i` of `c`.
fn row_lse(c: &Array2<f64>, g: &Array1<f64>, out: &mut Array1<f64>) {
    for (o, row) in out.iter_mut().zip(c.outer_iter()) {
        *o = log_sum_exp(row.iter().zip(g.iter()).map(|(c, g)| g - c));
    }
}

fn iterate_log(
    a: &Array1<f64>,
    b: &Array1<f64>,
    m: &Array2<f64>,
    lambda: f64,
    cfg: &SinkhornConfig,
    alpha0: Array1<f64>,
    beta0: Array1<f64>,
) -> IterOutcome {
    // Work with f = lambda alpha, g = lambda beta and C = lambda M.
    let c = Array2::from_shape_fn(m.dim(), |(i, j)| lambda * m[[i, j]]);
    let ct = Array2::from_shape_fn((m.ncols(), m.nrows()), |(j, i)| c[[i, j]]);
    let log_a = a.mapv(f64::ln);
    let log_b = b.mapv(f64::ln);
    let mut f = alpha0 * lambda;
    let mut g = beta0 * lambda;
    let mut rows = Array1::zeros(c.nrows());
    let mut cols = Array1::zeros(c.ncols());
    let mut residual = f64::INFINITY;
    // The row sums of one sweep give both its residual and the next row update.
    row_lse(&c, &g, &mut rows);
    for it in 1..=cfg.max_iter {
        f = &log_a - &rows;
        row_lse(&ct, &f, &mut cols);
        g = &log_b - &cols;
        row_lse(&c, &g, &mut rows);
        residual = f.iter().zip(rows.iter()).zip(a.iter()).map(|((fi, r), t)| ((fi + r).exp() - t).abs()).sum();
        if residual <= cfg.marginal_tol {
            return (f / lambda, g / lambda, it, true, residual);
        }
    }
    (f / lambda, g / lambda, cfg.max_iter, false, residual)
}

/// `<T, M> - h(T) / lambda` at the entropic optimum.
pub fn regularized_distance(a: &Histogram, b: &Histogram, cost: &CostMatrix, cfg: &SinkhornConfig) -> Result<f64> {
    Ok(sinkhorn_solve(a, b, cost, cfg)?.regularized_value(cost, cfg.lambda))
}

/// `<T, M>` for the entropic-optimal plan `T`.
pub fn sharp_distance(a: &Histogram, b: &Histogram, cost: &CostMatrix, cfg: &SinkhornConfig) -> Result<f64> {
    Ok(sinkhorn_solve(a, b, cost, cfg)?.sharp_value(cost))
}
