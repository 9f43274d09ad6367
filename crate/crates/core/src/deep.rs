//! Multi-layer networks built from a shallow fit without gradient steps.
//!
//! [`deepen`] keeps the first hidden layer of a shallow network and adds layers
//! whose neurons are each solved, by least squares on the previous layer's
//! activations, to reproduce the inverse-activated responses. Responses are
//! first mapped into a narrow band around the sigmoid's linear part. Every
//! neuron's target is offset by its own small seeded constant so the neurons of
//! a layer do not coincide.
//!
//! [`stack_layers`] instead feeds the hidden activations of one shallow fit in
//! as the inputs of the next.

use rayon::prelude::*;
use serde::Serialize;

use crate::activation::ActivationKind;
use crate::dataset::{normalize_targets, Dataset, NormParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numerics::{self, SolveReport};
use crate::rng::SeededRng;
use crate::sigmoid_net::{self, mean_abs_diff, SigmoidConfig, SigmoidNet};

#[derive(Debug, Clone, PartialEq)]
pub struct DeepNet {
    /// Layer 1 is `(n+1) × N`; later layers are `(N_prev+1) × N`. The last row
    /// of every matrix holds the biases.
    pub layers: Vec<Matrix>,
    pub output: Vec<f64>,
    pub activation: ActivationKind,
    pub norm: NormParams,
    pub n_features: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeepConfig {
    pub lo: f64,
    pub hi: f64,
    /// Half-width of the uniform per-neuron target offset.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for DeepConfig {
    fn default() -> Self {
        DeepConfig { lo: 0.4, hi: 0.6, jitter: 1e-3, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepReport {
    pub train_predictions: Vec<f64>,
    pub train_mae: f64,
    pub layer_solves: Vec<SolveReport>,
    pub output_solve: SolveReport,
}

fn with_ones(x: &Matrix) -> Matrix {
    let n = x.ncols();
    Matrix::from_fn(x.nrows(), n + 1, |i, j| if j < n { x[(i, j)] } else { 1.0 })
}

/// `[σ(input · w) | 1]` where `input` already ends in a ones column.
fn layer_forward(input: &Matrix, w: &Matrix, activation: &ActivationKind) -> Result<Matrix> {
    if input.ncols() != w.nrows() {
        return Err(Error::shape(format!("{} layer inputs", w.nrows()), input.ncols()));
    }
    let z = input.as_faer() * w.as_faer();
    let neurons = w.ncols();
    let mut out = Matrix::zeros(input.nrows(), neurons + 1);
    out.as_mut_slice().par_chunks_mut(neurons + 1).enumerate().for_each(|(i, row)| {
        for k in 0..neurons {
            row[k] = activation.forward(z[(i, k)]);
        }
        row[neurons] = 1.0;
    });
    if !out.is_finite() {
        return Err(Error::NonFinite("layer activations"));
    }
    Ok(out)
}

impl DeepNet {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Last hidden layer followed by a ones column.
    pub fn last_hidden(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.n_features {
            return Err(Error::shape(format!("{} features", self.n_features), x.ncols()));
        }
        let mut h = with_ones(x);
        for w in &self.layers {
            h = layer_forward(&h, w, &self.activation)?;
        }
        Ok(h)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let h = self.last_hidden(x)?;
        Ok(h.mul_vec(&self.output)?.into_iter().map(|s| self.norm.denormalize(s)).collect())
    }
}

pub fn predict_deep(net: &DeepNet, x: &Matrix) -> Result<Vec<f64>> {
    net.predict(x)
}

/// Grows `net` to `depth` layers on the data it was fitted to.
pub fn deepen(net: &SigmoidNet, ds: &Dataset, depth: usize, cfg: &DeepConfig) -> Result<(DeepNet, DeepReport)> {
    if depth < 2 {
        return Err(Error::InvalidArgument(format!("a deep network needs at least 2 layers, got {depth}")));
    }
    if ds.n_features() != net.n_features {
        return Err(Error::shape(format!("{} features", net.n_features), ds.n_features()));
    }
    let (scaled, norm) = normalize_targets(&ds.y, cfg.lo, cfg.hi)?;
    let act = net.activation;
    let logits: Vec<f64> = scaled.iter().map(|&y| act.inverse(y)).collect();
    let neurons = net.n_neurons();
    let mut rng = SeededRng::new(cfg.seed);

    let mut layers = vec![net.weights.clone()];
    let mut h = layer_forward(&with_ones(&ds.x), &net.weights, &act)?;
    let mut layer_solves = Vec::with_capacity(depth - 1);
    for _ in 1..depth {
        let offsets: Vec<f64> = (0..neurons).map(|_| rng.uniform_in(-cfg.jitter, cfg.jitter)).collect();
        let targets = Matrix::from_fn(ds.len(), neurons, |i, k| logits[i] + offsets[k]);
        let (w, rep) = numerics::least_squares_multi(&h, &targets)?;
        layer_solves.push(rep);
        h = layer_forward(&h, &w, &act)?;
        layers.push(w);
    }
    let (output, output_solve) = numerics::least_squares(&h, &scaled)?;
    let train_predictions: Vec<f64> = h.mul_vec(&output)?.into_iter().map(|s| norm.denormalize(s)).collect();
    let train_mae = mean_abs_diff(&train_predictions, &ds.y);
    let deep = DeepNet { layers, output, activation: act, norm, n_features: net.n_features };
    Ok((deep, DeepReport { train_predictions, train_mae, layer_solves, output_solve }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StackConfig {
    /// Settings for the first layer.
    pub base: SigmoidConfig,
    /// Neurons of every later layer; `None` keeps the first layer's width.
    pub hidden_neurons: Option<usize>,
}

impl From<SigmoidConfig> for StackConfig {
    fn from(base: SigmoidConfig) -> Self {
        StackConfig { base, hidden_neurons: None }
    }
}

/// Fits `depth` shallow networks in sequence, each on the hidden activations of
/// the one before.
pub fn stack_layers(ds: &Dataset, depth: usize, cfg: &StackConfig) -> Result<(DeepNet, DeepReport)> {
    if depth < 2 {
        return Err(Error::InvalidArgument(format!("a deep network needs at least 2 layers, got {depth}")));
    }
    let (first, _) = sigmoid_net::fit(ds, &cfg.base)?;
    let act = first.activation;
    let first_width = first.n_neurons();
    let mut layers = vec![first.weights.clone()];
    let mut h = layer_forward(&with_ones(&ds.x), &first.weights, &act)?;
    let mut last = first;
    let mut layer_solves = Vec::with_capacity(depth - 1);
    for l in 1..depth {
        let features = Matrix::from_fn(h.nrows(), h.ncols() - 1, |i, j| h[(i, j)]);
        let layer_ds = Dataset::new(features, ds.y.clone())?;
        let layer_cfg = SigmoidConfig { neurons: Some(cfg.hidden_neurons.unwrap_or(first_width)), seed: cfg.base.seed.wrapping_add(l as u64), ..cfg.base };
        let (net, rep) = sigmoid_net::fit(&layer_ds, &layer_cfg)?;
        layer_solves.push(rep.output_solve);
        h = layer_forward(&h, &net.weights, &act)?;
        layers.push(net.weights.clone());
        last = net;
    }
    let output_solve = *layer_solves.last().expect("at least one stacked layer");
    let train_predictions: Vec<f64> = h.mul_vec(&last.output)?.into_iter().map(|s| last.norm.denormalize(s)).collect();
    let train_mae = mean_abs_diff(&train_predictions, &ds.y);
    let deep = DeepNet { layers, output: last.output, activation: act, norm: last.norm, n_features: ds.n_features() };
    Ok((deep, DeepReport { train_predictions, train_mae, layer_solves, output_solve }))
}
