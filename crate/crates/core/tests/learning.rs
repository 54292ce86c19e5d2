mod common;

use common::*;
use ndarray::{array, Array1, Array2};
use rand::Rng;
use sharpot::barycenter::*;
use sharpot::learning::*;
use sharpot::simplex::grid_cost_1d;
use sharpot::*;

fn descent(lambda: f64, iters: usize) -> DescentConfig {
    DescentConfig::new(lambda).unwrap().with_max_iter(iters)
}

#[test]
fn kernel_matches_direct_formula() {
    let mut r = rng(51);
    for _ in 0..20 {
        let x = Array1::from_shape_fn(3, |_| r.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(3, |_| r.random_range(-1.0..1.0));
        let sigma = r.random_range(0.1..3.0);
        let d2: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!((gaussian_kernel(x.view(), y.view(), sigma).unwrap() - (-d2 / sigma).exp()).abs() < 1e-15);
    }
    assert!(gaussian_kernel(array![0.0].view(), array![1.0].view(), 0.0).is_err());
}

#[test]
fn score_system_residual_is_tiny() {
    let mut r = rng(52);
    let inputs = Array2::from_shape_fn((5, 2), |_| r.random_range(0.0..1.0));
    let outputs: Vec<Histogram> = (0..5).map(|_| random_histogram(&mut r, 4)).collect();
    let train = TrainingSet::from_histograms(inputs, &outputs).unwrap();
    let model = fit(&train, 0.5, 0.1).unwrap();
    for _ in 0..10 {
        let x = Array1::from_shape_fn(2, |_| r.random_range(0.0..1.0));
        assert!(model.residual(x.view()).unwrap() <= 1e-10);
    }
}

#[test]
fn separated_inputs_score_themselves_highest() {
    let mut r = rng(53);
    let inputs = Array2::from_shape_fn((6, 1), |(i, _)| 10.0 * i as f64);
    let outputs: Vec<Histogram> = (0..6).map(|_| random_histogram(&mut r, 4)).collect();
    let train = TrainingSet::from_histograms(inputs.clone(), &outputs).unwrap();
    let model = fit(&train, 1.0, 1e-6).unwrap();
    for (i, x) in inputs.outer_iter().enumerate() {
        let s = scores(&model, x).unwrap();
        let best = s.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(best, i);
        assert!(s[i] > 0.99);
    }
}

#[test]
fn duplicated_examples_get_equal_scores() {
    let y = random_histogram(&mut rng(54), 3);
    let other = random_histogram(&mut rng(55), 3);
    let inputs = array![[0.1], [0.4], [0.4], [0.9]];
    let train = TrainingSet::from_histograms(inputs, &[other.clone(), y.clone(), y, other]).unwrap();
    let model = fit(&train, 0.3, 0.05).unwrap();
    let s = scores(&model, array![0.5].view()).unwrap();
    assert!((s[1] - s[2]).abs() < 1e-12);
}

/// Minimizer of `S(., nu)` over the 3-bin simplex: 1e-2 grid, then a 1e-3 grid around the winner.
fn grid_minimizer(nu: &Histogram, cost: &CostMatrix, lambda: f64) -> Array1<f64> {
    let cfg = SinkhornConfig::new(lambda).unwrap().with_tol(1e-11).with_max_iter(100_000);
    let search = |centre: Option<(f64, f64)>, step: f64, radius: f64| {
        let mut best = (f64::INFINITY, Array1::zeros(3));
        let (lo0, hi0, lo1, hi1) = match centre {
            None => (step, 1.0, step, 1.0),
            Some((c0, c1)) => (c0 - radius, c0 + radius, c1 - radius, c1 + radius),
        };
        let mut p0 = lo0;
        while p0 <= hi0 + 1e-12 {
            let mut p1 = lo1;
            while p1 <= hi1 + 1e-12 {
                let p2 = 1.0 - p0 - p1;
                if p0 > 0.0 && p1 > 0.0 && p2 > 1e-12 {
                    let h = Histogram::normalized(array![p0, p1, p2]).unwrap();
                    let v = sharp_distance(&h, nu, cost, &cfg).unwrap();
                    if v < best.0 {
                        best = (v, array![p0, p1, p2]);
                    }
                }
                p1 += step;
            }
            p0 += step;
        }
        best.1
    };
    let coarse = search(None, 1e-2, 0.0);
    search(Some((coarse[0], coarse[1])), 1e-3, 2e-2)
}

#[test]
fn single_example_prediction_matches_grid_search() {
    let y = Histogram::new(array![0.25, 0.45, 0.3]).unwrap();
    let cost = grid_cost_1d(3, 3).unwrap();
    let train = TrainingSet::from_histograms(array![[0.0]], std::slice::from_ref(&y)).unwrap();
    let model = fit(&train, 1.0, 0.2).unwrap();
    let s = scores(&model, array![0.0].view()).unwrap();
    assert!((s[0] - 1.0 / 1.2).abs() < 1e-14);
    let cfg = descent(3.0, 2000).with_grad_tol(1e-9);
    let pred = predict(&model, array![0.0].view(), train.outputs(), SmoothMetric::Sharp, &cost, &cfg).unwrap();
    let grid = grid_minimizer(&y, &cost, 3.0);
    let err = (pred.histogram.weights() - &grid).mapv(f64::abs).sum();
    assert!(err <= 3e-3, "{} vs grid {grid}", pred.histogram.weights());
}

#[test]
fn training_input_predicts_its_own_output() {
    let mut r = rng(56);
    let n = 6;
    let cost = grid_cost_1d(n, n).unwrap();
    let inputs = Array2::from_shape_fn((4, 1), |(i, _)| 10.0 * i as f64);
    let outputs: Vec<Histogram> = (0..4).map(|_| random_histogram(&mut r, n)).collect();
    let train = TrainingSet::from_histograms(inputs, &outputs).unwrap();
    let model = fit(&train, 1.0, 1e-6).unwrap();
    let cfg = descent(2.0, 500).with_grad_tol(1e-8);
    let pred = predict(&model, array![20.0].view(), train.outputs(), SmoothMetric::Sharp, &cost, &cfg).unwrap();

    let single =
        BarycenterProblem::shared_support(vec![train.outputs()[2].histogram().clone()], &cost, vec![1.0]).unwrap();
    let (direct, _) = barycenter_descent(&single, train.outputs()[2].histogram(), SmoothMetric::Sharp, &cfg).unwrap();
    assert!(pred.histogram.histogram().l1_distance(direct.histogram()) < 1e-2);
}

#[test]
fn equal_scores_give_the_uniform_barycenter() {
    let mut r = rng(57);
    let n = 5;
    let cost = grid_cost_1d(n, n).unwrap();
    let outputs: Vec<InteriorHistogram> = (0..3).map(|_| random_interior(&mut r, n)).collect();
    let cfg = descent(1.0, 100);
    let pred = predict_with_scores(&Array1::from_elem(3, 0.2), &outputs, SmoothMetric::Sharp, &cost, &cfg).unwrap();

    let avg = outputs.iter().fold(Array1::zeros(n), |acc, y| acc + y.weights()) / 3.0;
    let init = sharpot::simplex::project_to_interior(avg.view(), 1e-8 / n as f64).unwrap();
    let measures = outputs.iter().map(|y| y.histogram().clone()).collect();
    let prob = BarycenterProblem::shared_support(measures, &cost, vec![1.0 / 3.0; 3]).unwrap();
    let (bary, _) = barycenter_descent(&prob, init.histogram(), SmoothMetric::Sharp, &cfg).unwrap();
    assert!(pred.histogram.histogram().l1_distance(bary.histogram()) < 1e-12);
}

#[test]
fn permuting_training_examples_changes_nothing() {
    let task = synthetic_gaussian_task(8, 10, 5).unwrap();
    let cost = grid_cost_1d(10, 10).unwrap();
    let perm = [5usize, 2, 7, 0, 1, 6, 3, 4];
    let shuffled = task.subset(&perm).unwrap();
    let cfg = descent(0.5, 20);
    let x = array![0.37];
    let p1 =
        predict(&fit(&task, 0.05, 0.1).unwrap(), x.view(), task.outputs(), SmoothMetric::Sharp, &cost, &cfg).unwrap();
    let p2 =
        predict(&fit(&shuffled, 0.05, 0.1).unwrap(), x.view(), shuffled.outputs(), SmoothMetric::Sharp, &cost, &cfg)
            .unwrap();
    assert!(p1.histogram.histogram().l1_distance(p2.histogram.histogram()) < 1e-8);
}

#[test]
fn regularized_metric_predictions_run() {
    let task = synthetic_gaussian_task(10, 10, 6).unwrap();
    let cost = grid_cost_1d(10, 10).unwrap();
    let model = fit(&task, 0.05, 0.1).unwrap();
    let pred = predict(&model, array![0.5].view(), task.outputs(), SmoothMetric::Regularized, &cost, &descent(0.5, 30));
    let pred = pred.unwrap();
    assert!((pred.histogram.weights().sum() - 1.0).abs() < 1e-12);
    assert!(pred.trace.objectives.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn single_point_grid_returns_that_pair() {
    let task = synthetic_gaussian_task(6, 8, 7).unwrap();
    let cost = grid_cost_1d(8, 8).unwrap();
    let cv = cross_validate(&task, &[0.2], &[0.05], 2, SmoothMetric::Sharp, &cost, &descent(0.5, 5), 1).unwrap();
    assert_eq!((cv.sigma, cv.gamma), (0.2, 0.05));
    assert!(cross_validate(&task, &[], &[0.05], 2, SmoothMetric::Sharp, &cost, &descent(0.5, 5), 1).is_err());
    assert!(cross_validate(&task, &[0.2], &[0.05], 1, SmoothMetric::Sharp, &cost, &descent(0.5, 5), 1).is_err());
}

#[test]
fn repeated_example_ties_go_to_the_first_gamma() {
    let y = gaussian_bins(3.0, 1.0, 8).unwrap();
    let inputs = Array2::from_elem((4, 1), 0.5);
    let task = TrainingSet::from_histograms(inputs, &vec![y; 4]).unwrap();
    let cost = grid_cost_1d(8, 8).unwrap();
    let gammas = [0.3, 0.01, 1.0];
    let cv = cross_validate(&task, &[0.1], &gammas, 2, SmoothMetric::Sharp, &cost, &descent(0.5, 10), 3).unwrap();
    assert_eq!(cv.gamma, 0.3);
    let row = cv.losses.row(0);
    assert!(row.iter().all(|l| (l - row[0]).abs() <= 1e-9 * row[0].abs()));
}

#[test]
fn selected_pair_is_near_the_recomputed_grid_minimum() {
    let task = synthetic_gaussian_task(16, 10, 8).unwrap();
    let cost = grid_cost_1d(10, 10).unwrap();
    let cfg = descent(0.5, 10);
    let (sigmas, gammas) = ([0.01, 0.1], [0.01, 0.3]);
    let (folds, seed) = (2, 9);
    let cv = cross_validate(&task, &sigmas, &gammas, folds, SmoothMetric::Sharp, &cost, &cfg, seed).unwrap();

    let labels = fold_assignment(task.len(), folds, seed);
    let mut grid = Array2::zeros((2, 2));
    for (si, &s) in sigmas.iter().enumerate() {
        for (gi, &g) in gammas.iter().enumerate() {
            let mut total = 0.0;
            for f in 0..folds {
                let train_idx: Vec<usize> = (0..task.len()).filter(|&i| labels[i] != f).collect();
                let test_idx: Vec<usize> = (0..task.len()).filter(|&i| labels[i] == f).collect();
                let (train, test) = (task.subset(&train_idx).unwrap(), task.subset(&test_idx).unwrap());
                let model = fit(&train, s, g).unwrap();
                for (x, truth) in test.inputs().outer_iter().zip(test.outputs()) {
                    let p = predict(&model, x, train.outputs(), SmoothMetric::Sharp, &cost, &cfg).unwrap();
                    total += sharp_distance(p.histogram.histogram(), truth.histogram(), &cost, &cfg.sinkhorn).unwrap();
                }
            }
            grid[[si, gi]] = total / task.len() as f64;
        }
    }
    let min = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let si = sigmas.iter().position(|s| *s == cv.sigma).unwrap();
    let gi = gammas.iter().position(|g| *g == cv.gamma).unwrap();
    assert!(grid[[si, gi]] <= 1.05 * min, "selected {} vs min {min}", grid[[si, gi]]);
}

#[test]
fn folds_cover_everything_evenly() {
    let labels = fold_assignment(11, 3, 4);
    for f in 0..3 {
        let c = labels.iter().filter(|l| **l == f).count();
        assert!((3..=4).contains(&c));
    }
    assert_eq!(labels, fold_assignment(11, 3, 4));
}
