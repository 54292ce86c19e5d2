//! Fixed-support barycenters under the Sinkhorn distances.
//!
//! The regularized barycenter is computed with iterative Bregman projections. The
//! sharp barycenter has no such scaling form and is found by accelerated projected
//! gradient descent over the interior simplex, using the sharp gradient from
//! [`crate::grad`]. The same descent also runs with the regularized gradient and with
//! signed weights (the weighted sums that appear in structured prediction).

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{OtError, Result};
use crate::exact::exact_wasserstein;
use crate::grad::{regularized_gradient_from_solution, sharp_gradient_from_solution};
use crate::simplex::{project_to_interior, CostMatrix, Histogram, InteriorHistogram};
use crate::sinkhorn::{
    log_sum_exp, sinkhorn_solve, sinkhorn_solve_warm, DualPotentials, SinkhornConfig, LOG_DOMAIN_LAMBDA,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Sharp,
    Regularized,
    Exact,
}

/// Measures `nu_i` with costs from the shared barycenter support, and their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterProblem {
    measures: Vec<Histogram>,
    costs: Vec<CostMatrix>,
    weights: Vec<f64>,
    support_size: usize,
    relaxed: bool,
}

impl BarycenterProblem {
    /// Standard problem: weights are nonnegative and sum to one.
    pub fn new(measures: Vec<Histogram>, costs: Vec<CostMatrix>, weights: Vec<f64>) -> Result<Self> {
        let prob = Self::build(measures, costs, weights, false)?;
        if prob.weights.iter().any(|w| *w < 0.0) {
            return Err(OtError::InvalidInput("barycenter weights must be nonnegative".into()));
        }
        let total: f64 = prob.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(OtError::InvalidInput(format!("barycenter weights sum to {total}, expected 1")));
        }
        Ok(prob)
    }

    /// Signed weights with no normalization constraint.
    pub fn relaxed(measures: Vec<Histogram>, costs: Vec<CostMatrix>, weights: Vec<f64>) -> Result<Self> {
        Self::build(measures, costs, weights, true)
    }

    /// All measures live on the same support and share one cost matrix.
    pub fn shared_support(measures: Vec<Histogram>, cost: &CostMatrix, weights: Vec<f64>) -> Result<Self> {
        let costs = vec![cost.clone(); measures.len()];
        Self::new(measures, costs, weights)
    }

    /// Standard problem with weights `1 / l`.
    pub fn uniform(measures: Vec<Histogram>, costs: Vec<CostMatrix>) -> Result<Self> {
        let l = measures.len().max(1);
        Self::new(measures, costs, vec![1.0 / l as f64; l])
    }

    fn build(measures: Vec<Histogram>, costs: Vec<CostMatrix>, weights: Vec<f64>, relaxed: bool) -> Result<Self> {
        if measures.is_empty() {
            return Err(OtError::InvalidInput("barycenter needs at least one measure".into()));
        }
        if measures.len() != costs.len() || measures.len() != weights.len() {
            return Err(OtError::InvalidInput(format!(
                "{} measures, {} cost matrices and {} weights",
                measures.len(),
                costs.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(OtError::InvalidInput("barycenter weights must be finite".into()));
        }
        let support_size = costs[0].nrows();
        for (k, (nu, c)) in measures.iter().zip(&costs).enumerate() {
            if c.nrows() != support_size || c.ncols() != nu.len() {
                return Err(OtError::InvalidInput(format!(
                    "cost matrix {k} is {}x{}, expected {support_size}x{}",
                    c.nrows(),
                    c.ncols(),
                    nu.len()
                )));
            }
        }
        Ok(Self { measures, costs, weights, support_size, relaxed })
    }

    pub fn measures(&self) -> &[Histogram] {
        &self.measures
    }

    pub fn costs(&self) -> &[CostMatrix] {
        &self.costs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn support_size(&self) -> usize {
        self.support_size
    }

    pub fn is_relaxed(&self) -> bool {
        self.relaxed
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }
}

/// `sum_i w_i D(mu, nu_i)` for the chosen distance `D`.
///
/// `cfg` is ignored for [`Metric::Exact`].
pub fn barycenter_functional(
    mu: &Histogram,
    prob: &BarycenterProblem,
    metric: Metric,
    cfg: &SinkhornConfig,
) -> Result<f64> {
    if mu.len() != prob.support_size {
        return Err(OtError::InvalidInput(format!(
            "barycenter has {} bins, problem support has {}",
            mu.len(),
            prob.support_size
        )));
    }
    let mut total = 0.0;
    for ((nu, cost), w) in prob.measures.iter().zip(&prob.costs).zip(&prob.weights) {
        let d = match metric {
            Metric::Exact => exact_wasserstein(mu, nu, cost)?.value,
            Metric::Sharp => sinkhorn_solve(mu, nu, cost, cfg)?.sharp_value(cost),
            Metric::Regularized => sinkhorn_solve(mu, nu, cost, cfg)?.regularized_value(cost, cfg.lambda),
        };
        total += w * d;
    }
    Ok(total)
}

/// Softmax form of the regularized barycenter of two point masses:
/// `a_i ∝ exp(-lambda (Mz_i + My_i) / 2)`.
pub fn delta_pair_regularized_closed_form(
    cost_z: ArrayView1<'_, f64>,
    cost_y: ArrayView1<'_, f64>,
    lambda: f64,
) -> Result<Histogram> {
    if !(lambda > 0.0) {
        return Err(OtError::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    if cost_z.len() != cost_y.len() || cost_z.is_empty() {
        return Err(OtError::InvalidInput("cost vectors must be non-empty and of equal length".into()));
    }
    let logits: Array1<f64> = (&cost_z + &cost_y).mapv(|c| -lambda * c / 2.0);
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(OtError::InvalidInput("cost vectors must be finite".into()));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Histogram::normalized(logits.mapv(|x| (x - max).exp()))
}

/// Regularized barycenter by iterative Bregman projections.
///
/// Each sweep sets `v_i = nu_i / (K_i^T u_i)`, forms the weighted geometric mean
/// `a = prod_i (K_i v_i)^{w_i}` and rescales `u_i = a / (K_i v_i)`, with
/// `K_i = exp(-lambda M_i)`. Stops when successive `a` differ by at most `tol` in L1.
/// Runs on log-potentials when `lambda` exceeds the log-domain threshold or the
/// kernel would underflow.
pub fn regularized_barycenter_ibp(
    prob: &BarycenterProblem,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Histogram> {
    if !(lambda > 0.0) {
        return Err(OtError::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    if prob.relaxed || prob.weights.iter().any(|w| *w < 0.0) {
        return Err(OtError::InvalidInput("Bregman projections need nonnegative weights summing to one".into()));
    }
    let n = prob.support_size;
    let max_cost = prob.costs.iter().map(CostMatrix::max).fold(0.0, f64::max);
    let log_domain = lambda > LOG_DOMAIN_LAMBDA || lambda * max_cost > 300.0;
    let log_kernels: Vec<Array2<f64>> = prob.costs.iter().map(|c| c.entries().mapv(|x| -lambda * x)).collect();
    let kernels: Vec<Array2<f64>> =
        if log_domain { Vec::new() } else { log_kernels.iter().map(|k| k.mapv(f64::exp)).collect() };

    let ell = prob.len();
    let mut log_u = vec![Array1::<f64>::zeros(n); ell];
    let mut log_kv = vec![Array1::<f64>::zeros(n); ell];
    let mut a = Array1::<f64>::zeros(n);
    let mut change = f64::INFINITY;
    for it in 1..=max_iter {
        let mut log_a = Array1::<f64>::zeros(n);
        for k in 0..ell {
            let nu = prob.measures[k].weights();
            if log_domain {
                let lk = &log_kernels[k];
                let m = nu.len();
                let lu = &log_u[k];
                let log_v: Array1<f64> =
                    Array1::from_shape_fn(m, |j| nu[j].ln() - log_sum_exp((0..n).map(|i| lu[i] + lk[[i, j]])));
                log_kv[k] = Array1::from_shape_fn(n, |i| log_sum_exp((0..m).map(|j| lk[[i, j]] + log_v[j])));
            } else {
                let kern = &kernels[k];
                let u = log_u[k].mapv(f64::exp);
                let v = nu / &kern.t().dot(&u);
                log_kv[k] = kern.dot(&v).mapv(f64::ln);
            }
            log_a.scaled_add(prob.weights[k], &log_kv[k]);
        }
        for k in 0..ell {
            log_u[k] = &log_a - &log_kv[k];
        }
        let next = log_a.mapv(f64::exp);
        if next.iter().any(|x| !x.is_finite()) || log_u.iter().any(|u| u.iter().any(|x| x.is_nan())) {
            return Err(OtError::NumericalOverflow("Bregman projection scalings left the f64 range".into()));
        }
        if it > 1 {
            change = (&next - &a).mapv(f64::abs).sum();
        }
        a = next;
        if change <= tol {
            return Histogram::normalized(a);
        }
    }
    Err(OtError::BarycenterNonConvergence { iterations: max_iter, change, last_iterate: a.to_vec() })
}

/// Which smooth Sinkhorn distance the descent minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothMetric {
    Sharp,
    Regularized,
}

/// Parameters of the accelerated projected gradient descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentConfig {
    pub sinkhorn: SinkhornConfig,
    pub max_iter: usize,
    /// Stop once the gradient-mapping norm falls below this.
    pub grad_tol: f64,
    /// Interior bound; `None` means `1e-8 / n`.
    pub epsilon: Option<f64>,
    /// First trial step; `None` means `1 / (lambda * max M)`.
    pub initial_step: Option<f64>,
    pub backtrack: f64,
    pub sufficient_decrease: f64,
}

impl DescentConfig {
    /// Sinkhorn solves at marginal tolerance 1e-9 with up to 10 000 iterations; 500 descent steps.
    pub fn new(lambda: f64) -> Result<Self> {
        let sinkhorn = SinkhornConfig::new(lambda)?.with_tol(1e-9).with_max_iter(10_000);
        Ok(Self {
            sinkhorn,
            max_iter: 500,
            grad_tol: 1e-7,
            epsilon: None,
            initial_step: None,
            backtrack: 0.5,
            sufficient_decrease: 1e-4,
        })
    }

    pub fn with_sinkhorn(mut self, sinkhorn: SinkhornConfig) -> Self {
        self.sinkhorn = sinkhorn;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_grad_tol(mut self, grad_tol: f64) -> Self {
        self.grad_tol = grad_tol;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn lambda(&self) -> f64 {
        self.sinkhorn.lambda
    }
}

/// Record of a descent run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    /// Objective at the initial point followed by one entry per accepted step.
    pub objectives: Vec<f64>,
    /// Step size of each accepted step.
    pub step_sizes: Vec<f64>,
    pub final_grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The last line search failed at the minimum step.
    pub stalled: bool,
}

struct Oracle<'a> {
    prob: &'a BarycenterProblem,
    metric: SmoothMetric,
    cfg: SinkhornConfig,
    warm: Vec<Option<DualPotentials>>,
}

impl Oracle<'_> {
    /// Objective and tangent gradient at `mu`; measures with zero weight are skipped.
    fn eval(&mut self, mu: &Histogram) -> Result<(f64, Array1<f64>)> {
        let mut value = 0.0;
        let mut grad = Array1::zeros(mu.len());
        for k in 0..self.prob.len() {
            let w = self.prob.weights[k];
            if w == 0.0 {
                continue;
            }
            let nu = &self.prob.measures[k];
            let cost = &self.prob.costs[k];
            let sol = sinkhorn_solve_warm(mu, nu, cost, &self.cfg, self.warm[k].as_ref())?;
            let (v, g) = match self.metric {
                SmoothMetric::Sharp => (sol.sharp_value(cost), sharp_gradient_from_solution(&sol, cost)?),
                SmoothMetric::Regularized => {
                    (sol.regularized_value(cost, self.cfg.lambda), regularized_gradient_from_solution(&sol)?)
                }
            };
            value += w * v;
            grad.scaled_add(w, g.components());
            self.warm[k] = Some(sol.duals);
        }
        Ok((value, grad))
    }
}

/// Accelerated projected gradient descent on `mu -> sum_i w_i S(mu, nu_i)` over the
/// interior simplex.
///
/// Nesterov momentum with a restart whenever a step would increase the objective,
/// Euclidean projection onto `{mu_i >= epsilon}` after every step, and Armijo
/// backtracking. The returned histogram is the best iterate; the objective trace is
/// non-increasing. A run whose final line search fails at the minimum step is
/// reported through [`SolverTrace::stalled`] rather than as an error.
pub fn barycenter_descent(
    prob: &BarycenterProblem,
    init: &Histogram,
    metric: SmoothMetric,
    cfg: &DescentConfig,
) -> Result<(InteriorHistogram, SolverTrace)> {
    let n = prob.support_size;
    if init.len() != n {
        return Err(OtError::InvalidInput(format!("initial point has {} bins, expected {n}", init.len())));
    }
    cfg.sinkhorn.validate()?;
    if n == 1 {
        let x = InteriorHistogram::from_positive(Histogram::uniform(1)?)?;
        let trace = SolverTrace { converged: true, ..Default::default() };
        return Ok((x, trace));
    }
    let eps = cfg.epsilon.unwrap_or(1e-8 / n as f64);
    let max_cost = prob.costs.iter().map(CostMatrix::max).fold(0.0, f64::max);
    let s0 = cfg.initial_step.unwrap_or(1.0 / (cfg.lambda() * max_cost.max(f64::MIN_POSITIVE)));
    let min_step = s0 * 1e-12;
    let mut oracle = Oracle { prob, metric, cfg: cfg.sinkhorn, warm: vec![None; prob.len()] };

    let mut x = project_to_interior(init.view(), eps)?;
    let (mut fx, mut gx) = oracle.eval(x.histogram())?;
    let mut y = x.clone();
    let (mut fy, mut gy) = (fx, gx.clone());
    let mut t = 1.0_f64;
    let mut step = s0;
    let mut trace = SolverTrace { objectives: vec![fx], ..Default::default() };

    for it in 0..cfg.max_iter {
        trace.iterations = it + 1;
        let at_iterate = y == x;
        // Backtracking from y.
        let accepted = loop {
            let trial = project_to_interior((y.weights() - &(step * &gy)).view(), eps)?;
            let d = trial.weights() - y.weights();
            let dnorm = d.dot(&d).sqrt();
            if dnorm == 0.0 {
                break Some((trial, fy, gy.clone(), 0.0));
            }
            let (ft, gt) = oracle.eval(trial.histogram())?;
            if ft <= fy + cfg.sufficient_decrease * gy.dot(&d) {
                break Some((trial, ft, gt, dnorm / step));
            }
            step *= cfg.backtrack;
            if step < min_step {
                break None;
            }
        };
        let Some((trial, ft, gt, grad_map)) = accepted else {
            if at_iterate {
                trace.stalled = true;
                break;
            }
            // Momentum point was a bad start: restart from the iterate.
            y = x.clone();
            (fy, gy) = (fx, gx.clone());
            t = 1.0;
            step = s0;
            continue;
        };
        if ft > fx {
            // Momentum overshoot: restart without accepting.
            y = x.clone();
            (fy, gy) = (fx, gx.clone());
            t = 1.0;
            continue;
        }
        trace.final_grad_norm = grad_map;
        if grad_map == 0.0 || (grad_map <= cfg.grad_tol && at_iterate) {
            if ft < fx {
                trace.objectives.push(ft);
                trace.step_sizes.push(step);
                x = trial;
            }
            trace.converged = true;
            break;
        }
        let x_prev = std::mem::replace(&mut x, trial);
        fx = ft;
        gx = gt;
        trace.objectives.push(fx);
        trace.step_sizes.push(step);
        if grad_map <= cfg.grad_tol {
            trace.converged = true;
            break;
        }

        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        t = t_next;
        if beta > 0.0 {
            let extrapolated = x.weights() + &(beta * &(x.weights() - x_prev.weights()));
            y = project_to_interior(extrapolated.view(), eps)?;
            (fy, gy) = oracle.eval(y.histogram())?;
        } else {
            y = x.clone();
            (fy, gy) = (fx, gx.clone());
        }
        // Let the step grow again after a successful move.
        step = (step * 1.5).min(s0 * 1e6);
    }
    Ok((x, trace))
}

/// Barycenter of the sharp Sinkhorn distance by accelerated projected gradient descent.
///
/// Fails with [`OtError::Stall`] when the line search cannot make progress.
pub fn sharp_barycenter_gd(
    prob: &BarycenterProblem,
    init: &Histogram,
    cfg: &DescentConfig,
) -> Result<(Histogram, SolverTrace)> {
    let (x, trace) = barycenter_descent(prob, init, SmoothMetric::Sharp, cfg)?;
    if trace.stalled && !trace.converged && trace.final_grad_norm > cfg.grad_tol {
        return Err(OtError::Stall {
            iterations: trace.iterations,
            objective: trace.objectives.last().copied().unwrap_or(f64::NAN),
        });
    }
    Ok((x.into_histogram(), trace))
}

/// Barycenter of the regularized Sinkhorn distance by the same descent.
pub fn regularized_barycenter_gd(
    prob: &BarycenterProblem,
    init: &Histogram,
    cfg: &DescentConfig,
) -> Result<(Histogram, SolverTrace)> {
    let (x, trace) = barycenter_descent(prob, init, SmoothMetric::Regularized, cfg)?;
    Ok((x.into_histogram(), trace))
}
