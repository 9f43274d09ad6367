//! Shallow sigmoid networks trained by neighborhoods.
//!
//! Each cluster of observations yields one hidden neuron: the responses of the
//! cluster are pushed through the inverse activation and the affine map
//! `[X_k | 1] (w, b) = σ⁻¹(y_k)` is solved directly. The output layer is then a
//! linear least-squares fit of the responses on the hidden activations of the
//! full sample.

use std::time::Instant;

use rayon::prelude::*;

use crate::activation::ActivationKind;
use crate::clustering::{self, Assignment, ClusterMode, DEFAULT_MAX_ITER};
use crate::dataset::{normalize_targets, Dataset, NormParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numerics::{self, SolveReport};
use crate::report::{seconds_since, FitReport, PhaseTimings};

#[derive(Debug, Clone, PartialEq)]
pub struct SigmoidNet {
    /// `(n+1) × N`; column `k` holds `(w_1k … w_nk, b_k)`.
    pub weights: Matrix,
    /// `(v_1 … v_N, b_0)`.
    pub output: Vec<f64>,
    pub activation: ActivationKind,
    pub norm: NormParams,
    pub n_features: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidConfig {
    pub activation: ActivationKind,
    /// Hidden neurons; `None` means `⌊m / (n+1)⌋`.
    pub neurons: Option<usize>,
    pub mode: ClusterMode,
    pub max_iter: usize,
    pub lo: f64,
    pub hi: f64,
    pub seed: u64,
}

impl Default for SigmoidConfig {
    fn default() -> Self {
        SigmoidConfig {
            activation: ActivationKind::default(),
            neurons: None,
            mode: ClusterMode::KMeans,
            max_iter: DEFAULT_MAX_ITER,
            lo: 0.1,
            hi: 0.9,
            seed: 0,
        }
    }
}

impl SigmoidConfig {
    /// Binary one-vs-rest targets are mapped onto `[eps, 1 − eps]`.
    pub fn classifier(eps: f64) -> Self {
        SigmoidConfig { lo: eps, hi: 1.0 - eps, ..SigmoidConfig::default() }
    }

    pub fn resolve_neurons(&self, m: usize, n: usize) -> Result<usize> {
        match self.neurons {
            Some(0) => Err(Error::InvalidArgument("neuron count must be positive".to_string())),
            Some(k) if k > m => Err(Error::TooFewObservations { have: m, need: k }),
            Some(k) => Ok(k),
            None => clustering::default_neuron_count(m, n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    pub w: Vec<f64>,
    pub b: f64,
    pub report: SolveReport,
}

/// Solves `[X_k | 1] (w, b) = σ⁻¹(y_k)` for one neighborhood. `y_k` must already
/// be scaled into `(0, 1)`.
pub fn fit_local_weights(x_k: &Matrix, y_k: &[f64], activation: &ActivationKind) -> Result<LocalFit> {
    let (m_k, n) = (x_k.nrows(), x_k.ncols());
    if m_k == 0 {
        return Err(Error::TooFewObservations { have: 0, need: 1 });
    }
    if y_k.len() != m_k {
        return Err(Error::shape(format!("{m_k} responses"), y_k.len()));
    }
    let a = Matrix::from_fn(m_k, n + 1, |i, j| if j < n { x_k[(i, j)] } else { 1.0 });
    let t: Vec<f64> = y_k.iter().map(|&y| activation.inverse(y)).collect();
    let (mut sol, report) =
        if m_k == n + 1 { numerics::solve_square(&a, &t, None)? } else { numerics::solve_rectangular(&a, &t)? };
    let b = sol.pop().unwrap_or(0.0);
    Ok(LocalFit { w: sol, b, report })
}

/// Hidden activations of every row plus a trailing column of ones.
pub fn assemble_output_matrix(x: &Matrix, weights: &Matrix, activation: &ActivationKind) -> Result<Matrix> {
    let n = x.ncols();
    if weights.nrows() != n + 1 {
        return Err(Error::shape(format!("weights with {} rows", n + 1), weights.nrows()));
    }
    let neurons = weights.ncols();
    let z = x.as_faer() * weights.as_faer().subrows(0, n);
    let bias = weights.row(n);
    let mut out = Matrix::zeros(x.nrows(), neurons + 1);
    out.as_mut_slice().par_chunks_mut(neurons + 1).enumerate().for_each(|(i, row)| {
        for k in 0..neurons {
            row[k] = activation.forward(z[(i, k)] + bias[k]);
        }
        row[neurons] = 1.0;
    });
    if !out.is_finite() {
        return Err(Error::NonFinite("hidden activations"));
    }
    Ok(out)
}

/// Normalizes responses, partitions the inputs and fits the network.
pub fn fit(ds: &Dataset, cfg: &SigmoidConfig) -> Result<(SigmoidNet, FitReport)> {
    let (m, n) = (ds.len(), ds.n_features());
    let neurons = cfg.resolve_neurons(m, n)?;
    let (scaled, norm) = normalize_targets(&ds.y, cfg.lo, cfg.hi)?;
    let t0 = Instant::now();
    let assignment = clustering::partition(&ds.x, neurons, cfg.mode, cfg.seed, cfg.max_iter)?;
    let cluster_time = seconds_since(t0);
    let (net, mut report) = fit_scaled(&ds.x, &scaled, norm, &assignment, &cfg.activation)?;
    report.timings.cluster = cluster_time;
    Ok((net, report))
}

/// Fits on a precomputed partition, skipping the clustering phase.
pub fn fit_with_assignment(ds: &Dataset, cfg: &SigmoidConfig, assignment: &Assignment) -> Result<(SigmoidNet, FitReport)> {
    if assignment.labels.len() != ds.len() {
        return Err(Error::shape(format!("{} labels", ds.len()), assignment.labels.len()));
    }
    let (scaled, norm) = normalize_targets(&ds.y, cfg.lo, cfg.hi)?;
    fit_scaled(&ds.x, &scaled, norm, assignment, &cfg.activation)
}

pub(crate) fn fit_scaled(
    x: &Matrix,
    scaled: &[f64],
    norm: NormParams,
    assignment: &Assignment,
    activation: &ActivationKind,
) -> Result<(SigmoidNet, FitReport)> {
    let n = x.ncols();
    let t0 = Instant::now();
    let local: Vec<LocalFit> = assignment
        .members()
        .par_iter()
        .map(|idx| {
            let yk: Vec<f64> = idx.iter().map(|&i| scaled[i]).collect();
            fit_local_weights(&x.select_rows(idx), &yk, activation)
        })
        .collect::<Result<_>>()?;
    let neurons = local.len();
    let mut weights = Matrix::zeros(n + 1, neurons);
    let mut local_fallbacks = 0;
    for (k, lf) in local.iter().enumerate() {
        for (j, &w) in lf.w.iter().enumerate() {
            weights[(j, k)] = w;
        }
        weights[(n, k)] = lf.b;
        if assignment.sizes[k] == n + 1 && lf.report.fell_back() {
            local_fallbacks += 1;
        }
    }
    let local_time = seconds_since(t0);

    let t1 = Instant::now();
    let o = assemble_output_matrix(x, &weights, activation)?;
    let (output, output_solve) = numerics::least_squares(&o, scaled)?;
    let output_time = seconds_since(t1);

    let net = SigmoidNet { weights, output, activation: *activation, norm, n_features: n };
    let train_predictions: Vec<f64> = o.mul_vec(&net.output)?.into_iter().map(|s| norm.denormalize(s)).collect();
    let actual: Vec<f64> = scaled.iter().map(|&s| norm.denormalize(s)).collect();
    let train_mae = mean_abs_diff(&train_predictions, &actual);

    let mut warnings = Vec::new();
    if local_fallbacks > 0 {
        warnings.push(format!(
            "{local_fallbacks} square neighborhood system(s) were singular (duplicate or collinear points); used the pseudo-inverse"
        ));
    }
    if output_solve.fell_back() {
        warnings.push("output layer normal equations were ill-conditioned; used a rank-revealing solve".to_string());
    }
    let report = FitReport {
        neurons,
        train_predictions,
        train_mae,
        local_fallbacks,
        output_solve,
        timings: PhaseTimings { cluster: 0.0, local_solve: local_time, output_solve: output_time },
        warnings,
    };
    Ok((net, report))
}

pub(crate) fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.len().max(1) as f64
}

impl SigmoidNet {
    pub fn n_neurons(&self) -> usize {
        self.weights.ncols()
    }

    /// Network output on the normalized response scale.
    pub fn predict_scaled(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::shape(format!("{} features", self.n_features), x.ncols()));
        }
        let o = assemble_output_matrix(x, &self.weights, &self.activation)?;
        o.mul_vec(&self.output)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.predict_scaled(x)?.into_iter().map(|s| self.norm.denormalize(s)).collect())
    }
}

pub fn predict(net: &SigmoidNet, x: &Matrix) -> Result<Vec<f64>> {
    net.predict(x)
}

/// One binary network per class, all fitted on a shared partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub classes: Vec<f64>,
    pub nets: Vec<SigmoidNet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierReport {
    /// Binary accuracy (percent, threshold 0.5) of each class model on the training rows.
    pub per_class_accuracy: Vec<f64>,
    /// Argmax accuracy (percent) on the training rows.
    pub accuracy: f64,
    pub timings: PhaseTimings,
}

pub fn class_labels(y: &[f64]) -> Vec<f64> {
    let mut classes: Vec<f64> = y.to_vec();
    classes.sort_by(f64::total_cmp);
    classes.dedup();
    classes
}

/// `1` where `y == class`, `0` elsewhere.
pub fn one_vs_rest(y: &[f64], class: f64) -> Vec<f64> {
    y.iter().map(|&v| if v == class { 1.0 } else { 0.0 }).collect()
}

/// Fits the model for a single class against the rest.
pub fn fit_binary(ds: &Dataset, class: f64, cfg: &SigmoidConfig, assignment: &Assignment) -> Result<SigmoidNet> {
    let target = one_vs_rest(&ds.y, class);
    let (scaled, norm) = normalize_targets(&target, cfg.lo, cfg.hi)?;
    fit_scaled(&ds.x, &scaled, norm, assignment, &cfg.activation).map(|(net, _)| net)
}

pub fn fit_classifier(ds: &Dataset, cfg: &SigmoidConfig) -> Result<(Classifier, ClassifierReport)> {
    let classes = class_labels(&ds.y);
    if classes.len() < 2 {
        return Err(Error::ConstantTarget(classes.first().copied().unwrap_or(f64::NAN)));
    }
    let neurons = cfg.resolve_neurons(ds.len(), ds.n_features())?;
    let t0 = Instant::now();
    let assignment = clustering::partition(&ds.x, neurons, cfg.mode, cfg.seed, cfg.max_iter)?;
    let cluster = seconds_since(t0);

    let t1 = Instant::now();
    let nets = classes.iter().map(|&c| fit_binary(ds, c, cfg, &assignment)).collect::<Result<Vec<_>>>()?;
    let fit_time = seconds_since(t1);
    let clf = Classifier { classes, nets };

    let scores = clf.scores(&ds.x)?;
    let per_class_accuracy = clf
        .classes
        .iter()
        .enumerate()
        .map(|(c, &label)| binary_accuracy(&scores.column(c), &ds.y, label))
        .collect();
    let predicted = clf.argmax(&scores);
    let accuracy = crate::benchmarks::accuracy(&predicted, &ds.y)?;
    let timings = PhaseTimings { cluster, local_solve: fit_time, output_solve: 0.0 };
    Ok((clf, ClassifierReport { per_class_accuracy, accuracy, timings }))
}

/// Percentage of rows whose thresholded score agrees with membership of `class`.
pub fn binary_accuracy(scores: &[f64], labels: &[f64], class: f64) -> f64 {
    let correct = scores.iter().zip(labels).filter(|(&s, &l)| (s >= 0.5) == (l == class)).count();
    100.0 * correct as f64 / labels.len().max(1) as f64
}

impl Classifier {
    /// `q × C` class scores on the 0/1 membership scale.
    pub fn scores(&self, x: &Matrix) -> Result<Matrix> {
        let cols = self.nets.iter().map(|net| net.predict(x)).collect::<Result<Vec<_>>>()?;
        Ok(Matrix::from_fn(x.nrows(), cols.len(), |i, c| cols[c][i]))
    }

    fn argmax(&self, scores: &Matrix) -> Vec<f64> {
        scores
            .rows()
            .map(|r| {
                // first maximum wins ties
                let best = r.iter().enumerate().fold(0, |b, (c, &s)| if s > r[b] { c } else { b });
                self.classes[best]
            })
            .collect()
    }

    pub fn classify(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.argmax(&self.scores(x)?))
    }
}

pub fn classify(clf: &Classifier, x: &Matrix) -> Result<Vec<f64>> {
    clf.classify(x)
}
