mod common;

use common::*;
use ndarray::{array, Array1, Array2};
use proptest::prelude::*;
use rand::Rng;
use sharpot::simplex::{grid_cost_1d, project_to_interior};
use sharpot::*;

/// Projection onto the simplex by enumerating candidate supports: on a support `S`
/// the projection is `v_S - (sum v_S - 1) / |S|`; the nearest feasible candidate wins.
fn projection_by_supports(v: &Array1<f64>) -> Array1<f64> {
    let n = v.len();
    let mut best: Option<(f64, Array1<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let shift = (idx.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / idx.len() as f64;
        let mut p = Array1::zeros(n);
        for &i in &idx {
            p[i] = v[i] - shift;
        }
        if p.iter().any(|x| *x < -1e-15) {
            continue;
        }
        let d = (&p - v).mapv(|x| x * x).sum();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, p));
        }
    }
    best.unwrap().1
}

#[test]
fn projection_matches_support_enumeration() {
    let mut r = rng(11);
    for _ in 0..200 {
        let v: Array1<f64> = Array1::from_shape_fn(5, |_| r.random_range(-1.0..2.0));
        let p = simplex_project(v.view()).unwrap();
        let q = projection_by_supports(&v);
        let err = (p.weights() - &q).mapv(f64::abs).sum();
        assert!(err < 1e-12, "v = {v}, got {}, expected {q}", p.weights());
    }
}

#[test]
fn clip_matches_grid_search_in_three_bins() {
    let eps = 0.05;
    let p = array![0.93, 0.07, 0.0];
    let q = clip_to_interior(&Histogram::new(p.clone()).unwrap(), eps).unwrap();
    let step = 1e-3;
    let mut best = (f64::INFINITY, [0.0; 3]);
    let k = (1.0 / step) as usize;
    for i in 0..=k {
        for j in 0..=(k - i) {
            let c = [i as f64 * step, j as f64 * step, 1.0 - (i + j) as f64 * step];
            if c.iter().any(|x| *x < eps - 1e-12) {
                continue;
            }
            let d: f64 = c.iter().zip(p.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, c);
            }
        }
    }
    let err: f64 = q.weights().iter().zip(best.1.iter()).map(|(a, b)| (a - b).abs()).sum();
    assert!(err < 2e-3, "got {}, grid {:?}", q.weights(), best.1);
}

#[test]
fn clip_of_a_vertex() {
    let q = clip_to_interior(&Histogram::new(array![1.0, 0.0]).unwrap(), 0.1).unwrap();
    assert!((q.weights()[0] - 0.9).abs() < 1e-12 && (q.weights()[1] - 0.1).abs() < 1e-12);
}

#[test]
fn histogram_validation() {
    assert!(Histogram::new(array![0.5, 0.5 + 1e-11]).is_err());
    assert!(Histogram::new(array![1.5, -0.5]).is_err());
    assert!(Histogram::new(Array1::<f64>::zeros(0)).is_err());
    assert!(Histogram::from_rounded(array![0.5, 0.5 + 1e-11], 1e-9).is_ok());
    assert!(clip_to_interior(&Histogram::uniform(4).unwrap(), 0.3).is_err());
}

#[test]
fn grid_cost_is_squared_distance() {
    let c = grid_cost_1d(3, 4).unwrap();
    assert_eq!(c.entries()[[0, 3]], 9.0);
    assert_eq!(c.entries()[[2, 1]], 1.0);
}

fn vec_strategy(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    n.prop_flat_map(|k| prop::collection::vec(-3.0f64..3.0, k))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_is_valid_and_idempotent(v in vec_strategy(1..12)) {
        let p = simplex_project(Array1::from(v).view()).unwrap();
        prop_assert!(p.weights().iter().all(|x| *x >= 0.0));
        prop_assert!((p.weights().sum() - 1.0).abs() <= 1e-12);
        let q = simplex_project(p.view()).unwrap();
        prop_assert_eq!(p, q);
    }

    #[test]
    fn interior_projection_respects_bound(v in vec_strategy(2..12), frac in 0.001f64..0.99) {
        let n = v.len();
        let eps = frac / n as f64;
        let q = project_to_interior(Array1::from(v).view(), eps).unwrap();
        prop_assert!(q.weights().iter().all(|x| *x >= eps - 1e-15));
        prop_assert!((q.weights().sum() - 1.0).abs() <= 1e-12);
        let again = clip_to_interior(q.histogram(), eps).unwrap();
        prop_assert_eq!(q, again);
    }

    #[test]
    fn entropy_of_a_plan_is_at_least_one(w in prop::collection::vec(0.0f64..1.0, 1..30), cols in 1usize..6) {
        let n = w.len();
        let total: f64 = w.iter().sum();
        prop_assume!(total > 0.0);
        // spread each row evenly over `cols` columns
        let t = Array2::from_shape_fn((n, cols), |(i, _)| w[i] / total / cols as f64);
        let a = Histogram::normalized(t.sum_axis(ndarray::Axis(1))).unwrap();
        let b = Histogram::normalized(t.sum_axis(ndarray::Axis(0))).unwrap();
        let plan = TransportPlan::new(t, a, b, 1e-9).unwrap();
        prop_assert!(entropy(&plan) >= 1.0 - 1e-12);
    }

    #[test]
    fn squared_self_cost_is_symmetric_with_zero_diagonal(pts in prop::collection::vec(-5.0f64..5.0, 2..20)) {
        let xs = Array2::from_shape_vec((pts.len() / 2, 2), pts[..pts.len() / 2 * 2].to_vec()).unwrap();
        prop_assume!(xs.nrows() > 0);
        let c = cost_from_points(&xs, &xs, 2.0).unwrap();
        let m = c.entries();
        prop_assert_eq!(m, &m.t());
        prop_assert!(m.diag().iter().all(|d| *d == 0.0));
    }

    #[test]
    fn tangent_projection_sums_to_zero(v in vec_strategy(1..20)) {
        let t = TangentVector::project(Array1::from(v));
        prop_assert!(t.components().sum().abs() <= 1e-10 * t.components().mapv(f64::abs).sum().max(1.0));
        prop_assert!(TangentVector::new(t.components().clone()).is_ok());
    }
}

#[test]
fn random_histograms_are_interior() {
    let mut r = rng(3);
    for n in 1..10 {
        let h = random_histogram(&mut r, n);
        assert!(InteriorHistogram::from_positive(h).is_ok());
    }
}
