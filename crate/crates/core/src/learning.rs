//! Structured prediction of histograms with Sinkhorn losses.
//!
//! Kernel ridge regression supplies a score per training example,
//! `alpha(x) = (K + gamma * l * I)^{-1} K_x`, and the prediction at `x` is the
//! barycenter of the training outputs weighted by those (possibly negative) scores.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::barycenter::{barycenter_descent, BarycenterProblem, DescentConfig, SmoothMetric, SolverTrace};
use crate::error::{OtError, Result};
use crate::linalg::Cholesky;
use crate::simplex::{clip_to_interior, project_to_interior, CostMatrix, Histogram, InteriorHistogram};
use crate::sinkhorn::sinkhorn_solve;

/// Scores below this fraction of `sum |alpha_i|` are set to zero before the descent.
pub const SCORE_CUTOFF: f64 = 1e-12;

/// Losses within this relative margin count as ties in cross-validation.
pub const CV_TIE_TOL: f64 = 1e-9;

/// `exp(-|x - y|^2 / sigma)`.
pub fn gaussian_kernel(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(OtError::InvalidParameter(format!("kernel bandwidth must be positive, got {sigma}")));
    }
    if x.len() != y.len() {
        return Err(OtError::InvalidInput(format!("input dimensions differ: {} vs {}", x.len(), y.len())));
    }
    Ok(kernel_unchecked(x, y, sigma))
}

fn kernel_unchecked(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>, sigma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / sigma).exp()
}

/// Gram matrix of the rows of `inputs`; symmetric by construction.
pub fn kernel_matrix(inputs: &Array2<f64>, sigma: f64) -> Result<Array2<f64>> {
    gaussian_kernel(Array1::zeros(inputs.ncols()).view(), Array1::zeros(inputs.ncols()).view(), sigma)?;
    let l = inputs.nrows();
    let mut k = Array2::zeros((l, l));
    for i in 0..l {
        for j in i..l {
            let v = kernel_unchecked(inputs.row(i), inputs.row(j), sigma);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    Ok(k)
}

/// Training inputs (one row per example) with histogram outputs on a common support.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    inputs: Array2<f64>,
    outputs: Vec<InteriorHistogram>,
}

impl TrainingSet {
    pub fn new(inputs: Array2<f64>, outputs: Vec<InteriorHistogram>) -> Result<Self> {
        if outputs.is_empty() || inputs.nrows() != outputs.len() {
            return Err(OtError::InvalidInput(format!(
                "{} inputs and {} outputs; need a matching, non-empty set",
                inputs.nrows(),
                outputs.len()
            )));
        }
        let n = outputs[0].len();
        if outputs.iter().any(|y| y.len() != n) {
            return Err(OtError::InvalidInput("all outputs must share the same number of bins".into()));
        }
        if inputs.iter().any(|x| !x.is_finite()) {
            return Err(OtError::InvalidInput("inputs must be finite".into()));
        }
        Ok(Self { inputs, outputs })
    }

    /// Clips raw histograms into the interior with bound `1e-6 / n`.
    pub fn from_histograms(inputs: Array2<f64>, outputs: &[Histogram]) -> Result<Self> {
        let n = outputs.first().map(Histogram::len).unwrap_or(1);
        let eps = 1e-6 / n as f64;
        let outputs = outputs.iter().map(|y| clip_to_interior(y, eps)).collect::<Result<Vec<_>>>()?;
        Self::new(inputs, outputs)
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &[InteriorHistogram] {
        &self.outputs
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn bins(&self) -> usize {
        self.outputs[0].len()
    }

    /// Sub-set with the listed examples, in order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Self::new(self.inputs.select(Axis(0), idx), idx.iter().map(|&i| self.outputs[i].clone()).collect())
    }
}

/// Fitted kernel ridge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightModel {
    sigma: f64,
    gamma: f64,
    inputs: Array2<f64>,
    chol: Cholesky,
}

impl WeightModel {
    /// Reassembles a model from stored parts (e.g. a model file).
    pub fn from_parts(sigma: f64, gamma: f64, inputs: Array2<f64>, factor: Array2<f64>) -> Result<Self> {
        if factor.nrows() != inputs.nrows() {
            return Err(OtError::InvalidInput("factor size does not match the number of inputs".into()));
        }
        Ok(Self { sigma, gamma, inputs, chol: Cholesky::from_factor(factor)? })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    /// Lower-triangular Cholesky factor of `K + gamma * l * I`.
    pub fn factor(&self) -> &Array2<f64> {
        self.chol.factor_matrix()
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    /// `(K_x)_i = k(x, x_i)`.
    pub fn kernel_vector(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if x.len() != self.inputs.ncols() {
            return Err(OtError::InvalidInput(format!(
                "query has dimension {}, model expects {}",
                x.len(),
                self.inputs.ncols()
            )));
        }
        Ok(self.inputs.outer_iter().map(|xi| kernel_unchecked(x, xi, self.sigma)).collect())
    }

    /// Scores `alpha(x)`; entries may be negative and need not sum to one.
    pub fn scores(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.chol.solve(self.kernel_vector(x)?.view()))
    }

    /// `|(K + gamma l I) alpha(x) - K_x|_2`.
    pub fn residual(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        let kx = self.kernel_vector(x)?;
        let alpha = self.chol.solve(kx.view());
        let mut a = kernel_matrix(&self.inputs, self.sigma)?;
        let shift = self.gamma * self.len() as f64;
        a.diag_mut().mapv_inplace(|d| d + shift);
        let r = a.dot(&alpha) - kx;
        Ok(r.dot(&r).sqrt())
    }
}

/// Factorizes `K + gamma * l * I` for the training inputs.
pub fn fit(train: &TrainingSet, sigma: f64, gamma: f64) -> Result<WeightModel> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(OtError::InvalidParameter(format!("ridge parameter must be positive, got {gamma}")));
    }
    let mut k = kernel_matrix(train.inputs(), sigma)?;
    let shift = gamma * train.len() as f64;
    k.diag_mut().mapv_inplace(|d| d + shift);
    let chol = Cholesky::factor(&k, 1e-14).map_err(|e| OtError::Numerical(format!("kernel system: {e}")))?;
    Ok(WeightModel { sigma, gamma, inputs: train.inputs().clone(), chol })
}

/// Scores of `model` at `x`.
pub fn scores(model: &WeightModel, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    model.scores(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub histogram: InteriorHistogram,
    /// The optimizer stopped on a failed line search; `histogram` is its best iterate.
    pub stalled: bool,
    pub trace: SolverTrace,
}

/// Minimizes `y -> sum_i alpha_i(x) S(y, y_i)` over the interior simplex.
///
/// Scores are rescaled by `sum |alpha_i|`, which leaves the minimizer unchanged, and
/// negligible ones (see [`SCORE_CUTOFF`]) are dropped. The
/// descent starts from the score-weighted average of the outputs projected into the
/// interior, or from the uniform histogram when no score is positive.
pub fn predict(
    model: &WeightModel,
    x: ArrayView1<'_, f64>,
    outputs: &[InteriorHistogram],
    metric: SmoothMetric,
    cost: &CostMatrix,
    cfg: &DescentConfig,
) -> Result<Prediction> {
    if outputs.len() != model.len() {
        return Err(OtError::InvalidInput(format!(
            "model has {} training examples but {} outputs were given",
            model.len(),
            outputs.len()
        )));
    }
    let alpha = model.scores(x)?;
    predict_with_scores(&alpha, outputs, metric, cost, cfg)
}

/// [`predict`] with precomputed scores.
pub fn predict_with_scores(
    alpha: &Array1<f64>,
    outputs: &[InteriorHistogram],
    metric: SmoothMetric,
    cost: &CostMatrix,
    cfg: &DescentConfig,
) -> Result<Prediction> {
    let n = cost.nrows();
    let eps = cfg.epsilon.unwrap_or(1e-8 / n as f64);
    let total = alpha.mapv(f64::abs).sum();
    let weights: Vec<f64> = if total > 0.0 {
        alpha.iter().map(|a| if a.abs() <= SCORE_CUTOFF * total { 0.0 } else { a / total }).collect()
    } else {
        alpha.to_vec()
    };

    let init = if weights.iter().any(|w| *w > 0.0) {
        let mut avg = Array1::zeros(n);
        for (w, y) in weights.iter().zip(outputs) {
            avg.scaled_add(*w, y.weights());
        }
        project_to_interior(avg.view(), eps)?.into_histogram()
    } else {
        Histogram::uniform(n)?
    };

    let measures = outputs.iter().map(|y| y.histogram().clone()).collect();
    let prob = BarycenterProblem::relaxed(measures, vec![cost.clone(); outputs.len()], weights)?;
    let (hist, trace) = barycenter_descent(&prob, &init, metric, cfg)?;
    Ok(Prediction { histogram: hist, stalled: trace.stalled && !trace.converged, trace })
}

/// Result of a grid search over `(sigma, gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub sigma: f64,
    pub gamma: f64,
    /// Mean held-out sharp loss, indexed `[sigma_index, gamma_index]`.
    pub losses: Array2<f64>,
}

/// Deterministic fold label for each example: a seeded shuffle dealt round-robin.
pub fn fold_assignment(len: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![0; len];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = pos % folds;
    }
    labels
}

/// Mean sharp Sinkhorn loss `S(prediction, truth)` of a model over a held-out set.
pub fn held_out_loss(
    model: &WeightModel,
    train_outputs: &[InteriorHistogram],
    test: &TrainingSet,
    metric: SmoothMetric,
    cost: &CostMatrix,
    cfg: &DescentConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for (x, truth) in test.inputs().outer_iter().zip(test.outputs()) {
        let pred = predict(model, x, train_outputs, metric, cost, cfg)?;
        total += sinkhorn_solve(pred.histogram.histogram(), truth.histogram(), cost, &cfg.sinkhorn)?.sharp_value(cost);
    }
    Ok(total / test.len() as f64)
}

/// Grid search minimizing the mean held-out sharp Sinkhorn loss over `folds` folds.
///
/// Grid points are scanned sigma-major; a later point replaces the incumbent only if
/// its loss is lower by more than [`CV_TIE_TOL`] relative, so ties go to the earliest.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    train: &TrainingSet,
    sigma_grid: &[f64],
    gamma_grid: &[f64],
    folds: usize,
    metric: SmoothMetric,
    cost: &CostMatrix,
    cfg: &DescentConfig,
    seed: u64,
) -> Result<CrossValidation> {
    if sigma_grid.is_empty() || gamma_grid.is_empty() {
        return Err(OtError::InvalidInput("parameter grids must be non-empty".into()));
    }
    if folds < 2 || folds > train.len() {
        return Err(OtError::InvalidParameter(format!("need 2 <= folds <= {} examples, got {folds}", train.len())));
    }
    let labels = fold_assignment(train.len(), folds, seed);
    let splits: Vec<(TrainingSet, TrainingSet)> = (0..folds)
        .map(|k| {
            let tr: Vec<usize> = (0..train.len()).filter(|&i| labels[i] != k).collect();
            let te: Vec<usize> = (0..train.len()).filter(|&i| labels[i] == k).collect();
            Ok((train.subset(&tr)?, train.subset(&te)?))
        })
        .collect::<Result<_>>()?;

    let mut losses = Array2::zeros((sigma_grid.len(), gamma_grid.len()));
    let mut best: Option<(usize, usize)> = None;
    for (si, &sigma) in sigma_grid.iter().enumerate() {
        for (gi, &gamma) in gamma_grid.iter().enumerate() {
            let mut total = 0.0;
            for (tr, te) in &splits {
                let model = fit(tr, sigma, gamma)?;
                total += held_out_loss(&model, tr.outputs(), te, metric, cost, cfg)?;
            }
            let loss = total / folds as f64;
            losses[[si, gi]] = loss;
            let better = match best {
                None => true,
                Some((bs, bg)) => {
                    let incumbent: f64 = losses[[bs, bg]];
                    loss < incumbent - CV_TIE_TOL * incumbent.abs().max(f64::MIN_POSITIVE)
                }
            };
            if better {
                best = Some((si, gi));
            }
        }
    }
    let (si, gi) = best.expect("grids are non-empty");
    Ok(CrossValidation { sigma: sigma_grid[si], gamma: gamma_grid[gi], losses })
}

/// Synthetic regression task: `x ~ U[0, 1]`, output a Gaussian on `bins` integer bins
/// with mean `5 + 10 x` and standard deviation 2, clipped into the interior.
pub fn synthetic_gaussian_task(len: usize, bins: usize, seed: u64) -> Result<TrainingSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
    let outputs = xs.iter().map(|&x| gaussian_bins(5.0 + 10.0 * x, 2.0, bins)).collect::<Result<Vec<_>>>()?;
    TrainingSet::from_histograms(Array2::from_shape_vec((len, 1), xs).expect("shape matches"), &outputs)
}

/// Normalized Gaussian density sampled at the integer bins `0..bins`.
pub fn gaussian_bins(mean: f64, sd: f64, bins: usize) -> Result<Histogram> {
    Histogram::normalized(Array1::from_shape_fn(bins, |i| {
        let z = (i as f64 - mean) / sd;
        (-0.5 * z * z).exp()
    }))
}
