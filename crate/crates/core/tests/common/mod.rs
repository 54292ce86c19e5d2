#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sharpot::{CostMatrix, Histogram, InteriorHistogram, SinkhornConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Strictly positive random histogram with entries drawn from U(0.1, 1) before normalization.
pub fn random_histogram(rng: &mut ChaCha8Rng, n: usize) -> Histogram {
    let w: Array1<f64> = Array1::from_shape_fn(n, |_| rng.random_range(0.1..1.0));
    Histogram::normalized(w).unwrap()
}

pub fn random_interior(rng: &mut ChaCha8Rng, n: usize) -> InteriorHistogram {
    InteriorHistogram::from_positive(random_histogram(rng, n)).unwrap()
}

pub fn random_cost(rng: &mut ChaCha8Rng, n: usize, m: usize) -> CostMatrix {
    CostMatrix::new(Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..1.0))).unwrap()
}

/// Random unit direction with zero sum.
pub fn random_tangent(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    let mut v: Array1<f64> = Array1::from_shape_fn(n, |_| rng.sample(StandardNormal));
    let mean = v.sum() / n as f64;
    v.mapv_inplace(|x| x - mean);
    let norm = v.dot(&v).sqrt();
    v / norm
}

/// Tight solver settings for finite-difference work.
pub fn tight(lambda: f64) -> SinkhornConfig {
    SinkhornConfig::new(lambda).unwrap().with_tol(1e-14).with_max_iter(200_000)
}

/// `a + t v`, renormalized onto the simplex (a no-op up to rounding for tangent `v`).
pub fn perturb(a: &Histogram, v: &Array1<f64>, t: f64) -> Histogram {
    let p = a.weights() + &(t * v);
    assert!(p.iter().all(|x| *x > 0.0), "perturbation left the interior");
    Histogram::normalized(p).unwrap()
}

/// Central difference of `f` at `a` along `v` with step `h`.
pub fn central_difference(f: impl Fn(&Histogram) -> f64, a: &Histogram, v: &Array1<f64>, h: f64) -> f64 {
    (f(&perturb(a, v, h)) - f(&perturb(a, v, -h))) / (2.0 * h)
}

/// `|x - y| / max(|x|, |y|, floor)`.
pub fn rel_err(x: f64, y: f64, floor: f64) -> f64 {
    (x - y).abs() / x.abs().max(y.abs()).max(floor)
}

/// Largest entrywise gap between `dual_hessian` and a central-difference Jacobian of the
/// reduced dual gradient `(T 1, Tbar^T 1)` in `(alpha, beta_1..beta_{m-1})`, divided by `lambda`.
pub fn hessian_fd_gap(a: &Histogram, b: &Histogram, cost: &CostMatrix, lambda: f64) -> f64 {
    use sharpot::grad::dual_hessian;
    let sol = sharpot::sinkhorn_solve(a, b, cost, &tight(lambda)).unwrap();
    let blocks = dual_hessian(a, b, &sol.plan).unwrap();
    let (n, m) = (a.len(), b.len());
    let mut x: Vec<f64> = sol.duals.alpha().to_vec();
    x.extend(sol.duals.beta().iter().take(m - 1));
    let grad = |x: &[f64]| -> Vec<f64> {
        let t = Array2::from_shape_fn((n, m), |(i, j)| {
            let beta = if j + 1 < m { x[n + j] } else { 0.0 };
            (lambda * (x[i] + beta - cost.entries()[[i, j]])).exp()
        });
        let mut out: Vec<f64> = t.sum_axis(ndarray::Axis(1)).to_vec();
        out.extend(t.sum_axis(ndarray::Axis(0)).iter().take(m - 1));
        out
    };
    let h = 1e-6;
    let k = n + m - 1;
    let exact = blocks.assemble();
    let mut gap: f64 = 0.0;
    for c in 0..k {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[c] += h;
        xm[c] -= h;
        let (gp, gm) = (grad(&xp), grad(&xm));
        for r in 0..k {
            let fd = (gp[r] - gm[r]) / (2.0 * h) / lambda;
            gap = gap.max((fd - exact[[r, c]]).abs());
        }
    }
    gap
}

/// Dense LU solve of `(D1 - Tbar D2 Tbar^T) g = f` with nalgebra.
pub fn nalgebra_reduced_solve(blocks: &sharpot::grad::HessianBlocks, f: &Array1<f64>) -> Array1<f64> {
    let h = blocks.schur_matrix();
    let n = h.nrows();
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| h[[i, j]]);
    let rhs = nalgebra::DVector::from_iterator(n, f.iter().copied());
    let sol = mat.lu().solve(&rhs).expect("singular reduced matrix");
    Array1::from_iter(sol.iter().copied())
}
