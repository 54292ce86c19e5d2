//! How fast the Sinkhorn distances approach the Wasserstein distance as `lambda` grows.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::exact::exact_wasserstein;
use crate::io::format_sig;
use crate::simplex::{CostMatrix, Histogram};
use crate::sinkhorn::{sinkhorn_solve, SinkhornConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RateStudyRecord {
    pub lambda: f64,
    /// `|S_lambda - W|`.
    pub sharp_gap: f64,
    /// `|S~_lambda - W|`.
    pub regularized_gap: f64,
    pub iterations: usize,
    /// Solver error for this `lambda`; the gaps are then NaN.
    pub error: Option<String>,
}

impl RateStudyRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Computes `W` once with the exact solver, then both gaps for every `lambda`.
///
/// `template` supplies tolerance, iteration cap and domain; its `lambda` is replaced.
/// A solver failure at one `lambda` is recorded in that row and the study continues.
pub fn run_rate_study(
    a: &Histogram,
    b: &Histogram,
    cost: &CostMatrix,
    lambdas: &[f64],
    template: &SinkhornConfig,
) -> Result<Vec<RateStudyRecord>> {
    let w = exact_wasserstein(a, b, cost)?.value;
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let cfg = SinkhornConfig { lambda, ..*template };
        let record = match cfg.validate().and_then(|_| sinkhorn_solve(a, b, cost, &cfg)) {
            Ok(sol) => RateStudyRecord {
                lambda,
                sharp_gap: (sol.sharp_value(cost) - w).abs(),
                regularized_gap: (sol.regularized_value(cost, lambda) - w).abs(),
                iterations: sol.iterations,
                error: None,
            },
            Err(e) => RateStudyRecord {
                lambda,
                sharp_gap: f64::NAN,
                regularized_gap: f64::NAN,
                iterations: 0,
                error: Some(e.to_string()),
            },
        };
        out.push(record);
    }
    Ok(out)
}

/// CSV with header `lambda,sharp_gap,regularized_gap,iterations`; failed rows read `nan`.
pub fn rate_study_csv(records: &[RateStudyRecord]) -> String {
    let mut s = String::from("lambda,sharp_gap,regularized_gap,iterations\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{}\n",
            format_sig(r.lambda),
            format_sig(r.sharp_gap),
            format_sig(r.regularized_gap),
            r.iterations
        ));
    }
    s
}

/// Seeded `n x n` instance: histograms with entries drawn from `U(0.1, 1)` before
/// normalization and integer costs drawn uniformly from `0..=4`.
///
/// Integer costs separate the optimal vertex from its neighbours by whole units, so
/// the sharp gap decays roughly like `exp(-lambda)` instead of at a rate set by a
/// tiny cost difference.
pub fn seeded_instance(n: usize, seed: u64) -> Result<(Histogram, Histogram, CostMatrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Histogram::normalized(Array1::from_shape_fn(n, |_| rng.random_range(0.1..1.0)))?;
    let b = Histogram::normalized(Array1::from_shape_fn(n, |_| rng.random_range(0.1..1.0)))?;
    let cost = CostMatrix::new(Array2::from_shape_fn((n, n), |_| rng.random_range(0..=4u32) as f64))?;
    Ok((a, b, cost))
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
