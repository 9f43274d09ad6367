//! Radial-basis networks trained by neighborhoods.
//!
//! Every cluster interpolates its own responses with a kernel expansion centred
//! on its members, `Φ_k w_k = y_k`. The cluster expansions, evaluated on the
//! whole sample, become the columns of a global matrix whose least-squares
//! solution gives the output weights. Derivatives of the fitted surface reuse
//! the same weights with differentiated kernels.
//!
//! Kernels are written in terms of the squared distance `d = Σ_p (x_jp − x_p)²`
//! and `δ_p = x_jp − x_p`, so `∂d/∂x_p = −2 δ_p`:
//!
//! | kernel | φ | ∂φ/∂x_p | ∂²φ/∂x_p² |
//! |---|---|---|---|
//! | gaussian | `exp(−d/c)` | `2δ_p φ / c` | `φ (4δ_p²/c² − 2/c)` |
//! | multiquadric | `√(1 + c² d)` | `−c² δ_p / φ` | `c²/φ − c⁴ δ_p² / φ³` |
//! | quartic | `−d⁴/4` | `2 δ_p d³` | `−12 δ_p² d² − 2 d³` |
//!
//! The gaussian shape parameter `c` is a squared length scale. The
//! twice-integrated gaussian is one-dimensional; with `u = x − x_j` it is
//! `½ [c² e^{−u²/c²} + c√π u erf(u/c)]`, its first derivative `½ c√π erf(u/c)`
//! and its second derivative `e^{−u²/c²}`.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::clustering::{self, sq_dist, Assignment, ClusterMode, DEFAULT_MAX_ITER};
use crate::dataset::{normalize_targets, split_indices, Dataset, NormParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numerics;
use crate::report::{seconds_since, FitReport, PhaseTimings};
use crate::sigmoid_net::mean_abs_diff;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Gaussian,
    Multiquadric,
    QuarticPolyharmonic,
    IntegratedGaussian2,
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Gaussian => "gaussian",
            KernelKind::Multiquadric => "multiquadric",
            KernelKind::QuarticPolyharmonic => "quartic",
            KernelKind::IntegratedGaussian2 => "integrated_gaussian_2",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelKind::Gaussian),
            "multiquadric" => Ok(KernelKind::Multiquadric),
            "quartic" | "quartic_polyharmonic" => Ok(KernelKind::QuarticPolyharmonic),
            "integrated_gaussian_2" | "irbf2" => Ok(KernelKind::IntegratedGaussian2),
            _ => Err(Error::InvalidArgument(format!("unknown kernel `{s}`"))),
        }
    }
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub c: f64,
}

impl Kernel {
    pub fn new(kind: KernelKind, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("shape parameter must be positive, got {c}")));
        }
        Ok(Kernel { kind, c })
    }

    pub fn gaussian(c: f64) -> Self {
        Kernel { kind: KernelKind::Gaussian, c }
    }

    pub fn check_dimension(&self, n: usize) -> Result<()> {
        if self.kind == KernelKind::IntegratedGaussian2 && n != 1 {
            return Err(Error::UnsupportedDimension { kernel: self.kind.name(), supported: 1, got: n });
        }
        Ok(())
    }

    pub fn check_order(&self, order: usize) -> Result<()> {
        if order > 2 {
            return Err(Error::UnsupportedOrder { kernel: self.kind.name(), order });
        }
        Ok(())
    }

    /// `∂ˡφ/∂x_pˡ` at evaluation point `x` for center `xj`, `order` in 0..=2.
    /// Shapes are assumed checked.
    #[inline]
    pub(crate) fn eval_unchecked(&self, xj: &[f64], x: &[f64], order: usize, p: usize) -> f64 {
        let c = self.c;
        let d = sq_dist(xj, x);
        match (self.kind, order) {
            (KernelKind::Gaussian, 0) => (-d / c).exp(),
            (KernelKind::Gaussian, 1) => 2.0 * (xj[p] - x[p]) / c * (-d / c).exp(),
            (KernelKind::Gaussian, _) => {
                let dp = xj[p] - x[p];
                (-d / c).exp() * (4.0 * dp * dp / (c * c) - 2.0 / c)
            }
            (KernelKind::Multiquadric, 0) => (1.0 + c * c * d).sqrt(),
            (KernelKind::Multiquadric, 1) => -c * c * (xj[p] - x[p]) / (1.0 + c * c * d).sqrt(),
            (KernelKind::Multiquadric, _) => {
                let phi = (1.0 + c * c * d).sqrt();
                let dp = xj[p] - x[p];
                c * c / phi - c.powi(4) * dp * dp / phi.powi(3)
            }
            (KernelKind::QuarticPolyharmonic, 0) => -d.powi(4) / 4.0,
            (KernelKind::QuarticPolyharmonic, 1) => 2.0 * (xj[p] - x[p]) * d.powi(3),
            (KernelKind::QuarticPolyharmonic, _) => {
                let dp = xj[p] - x[p];
                -12.0 * dp * dp * d * d - 2.0 * d.powi(3)
            }
            (KernelKind::IntegratedGaussian2, 0) => {
                let u = x[0] - xj[0];
                0.5 * (c * c * (-u * u / (c * c)).exp() + c * PI.sqrt() * u * libm::erf(u / c))
            }
            (KernelKind::IntegratedGaussian2, 1) => 0.5 * c * PI.sqrt() * libm::erf((x[0] - xj[0]) / c),
            (KernelKind::IntegratedGaussian2, _) => {
                let u = x[0] - xj[0];
                (-u * u / (c * c)).exp()
            }
        }
    }
}

/// `Σ_p (x_jp − x_p)²`.
pub fn distance_sq(xj: &[f64], x: &[f64]) -> Result<f64> {
    if xj.len() != x.len() {
        return Err(Error::shape(format!("point of dimension {}", xj.len()), x.len()));
    }
    Ok(sq_dist(xj, x))
}

pub fn kernel_eval(k: &Kernel, xj: &[f64], x: &[f64]) -> Result<f64> {
    kernel_derivative(k, xj, x, 0, 0)
}

/// `∂ˡφ/∂x_pˡ` with respect to the evaluation point `x`.
pub fn kernel_derivative(k: &Kernel, xj: &[f64], x: &[f64], order: usize, p: usize) -> Result<f64> {
    if xj.len() != x.len() {
        return Err(Error::shape(format!("point of dimension {}", xj.len()), x.len()));
    }
    k.check_dimension(x.len())?;
    k.check_order(order)?;
    if order > 0 && p >= x.len() {
        return Err(Error::InvalidArgument(format!("dimension {p} out of range for {}-dimensional points", x.len())));
    }
    if !xj.iter().chain(x).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("kernel arguments"));
    }
    Ok(k.eval_unchecked(xj, x, order, p))
}

/// `q × m_k` matrix of `∂ˡφ(centers_j, points_i)/∂x_pˡ`.
pub fn kernel_matrix(k: &Kernel, centers: &Matrix, points: &Matrix, order: usize, p: usize) -> Result<Matrix> {
    if centers.ncols() != points.ncols() {
        return Err(Error::shape(format!("{} columns", centers.ncols()), points.ncols()));
    }
    k.check_dimension(points.ncols())?;
    k.check_order(order)?;
    let mc = centers.nrows();
    let mut out = Matrix::zeros(points.nrows(), mc);
    if mc == 0 {
        return Ok(out);
    }
    out.as_mut_slice().par_chunks_mut(mc).enumerate().for_each(|(i, row)| {
        let x = points.row(i);
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = k.eval_unchecked(centers.row(j), x, order, p);
        }
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbfCluster {
    /// Collocation points, one per row.
    pub centers: Matrix,
    pub w: Vec<f64>,
}

impl RbfCluster {
    /// `Σ_j w_j ∂ˡφ(x_j, x)/∂x_pˡ`.
    #[inline]
    pub(crate) fn expansion(&self, kernel: &Kernel, x: &[f64], order: usize, p: usize) -> f64 {
        self.centers.rows().zip(&self.w).map(|(c, w)| w * kernel.eval_unchecked(c, x, order, p)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbfNet {
    pub kernel: Kernel,
    pub clusters: Vec<RbfCluster>,
    /// `(v_1 … v_N, b_0)`.
    pub output: Vec<f64>,
    pub norm: Option<NormParams>,
    pub n_features: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfConfig {
    pub kernel: Kernel,
    /// Clusters; `None` picks `⌈m / 1000⌉`.
    pub neurons: Option<usize>,
    pub mode: ClusterMode,
    pub max_iter: usize,
    pub seed: u64,
    /// Scale responses into `[lo, hi]` before fitting.
    pub normalize: Option<(f64, f64)>,
}

impl Default for RbfConfig {
    fn default() -> Self {
        RbfConfig {
            kernel: Kernel::gaussian(0.01),
            neurons: None,
            mode: ClusterMode::KMeans,
            max_iter: DEFAULT_MAX_ITER,
            seed: 0,
            normalize: None,
        }
    }
}

/// Observations per cluster used when the cluster count is left to the default.
pub const DEFAULT_CLUSTER_POINTS: usize = 1000;

impl RbfConfig {
    pub fn resolve_neurons(&self, m: usize) -> Result<usize> {
        match self.neurons {
            Some(0) => Err(Error::InvalidArgument("cluster count must be positive".to_string())),
            Some(k) if k > m => Err(Error::TooFewObservations { have: m, need: k }),
            Some(k) => Ok(k),
            None => Ok(m.div_ceil(DEFAULT_CLUSTER_POINTS).max(1)),
        }
    }
}

pub fn fit_rbf(ds: &Dataset, cfg: &RbfConfig) -> Result<(RbfNet, FitReport)> {
    cfg.kernel.check_dimension(ds.n_features())?;
    let neurons = cfg.resolve_neurons(ds.len())?;
    let t0 = Instant::now();
    let assignment = clustering::partition(&ds.x, neurons, cfg.mode, cfg.seed, cfg.max_iter)?;
    let cluster = seconds_since(t0);
    let (net, mut report) = fit_rbf_with_assignment(ds, cfg, &assignment)?;
    report.timings.cluster = cluster;
    Ok((net, report))
}

pub fn fit_rbf_with_assignment(ds: &Dataset, cfg: &RbfConfig, assignment: &Assignment) -> Result<(RbfNet, FitReport)> {
    let kernel = cfg.kernel;
    kernel.check_dimension(ds.n_features())?;
    if assignment.labels.len() != ds.len() {
        return Err(Error::shape(format!("{} labels", ds.len()), assignment.labels.len()));
    }
    let (targets, norm) = match cfg.normalize {
        Some((lo, hi)) => {
            let (s, p) = normalize_targets(&ds.y, lo, hi)?;
            (s, Some(p))
        }
        None => (ds.y.clone(), None),
    };

    let t0 = Instant::now();
    let fitted: Vec<(RbfCluster, bool)> = assignment
        .members()
        .par_iter()
        .map(|idx| {
            let centers = ds.x.select_rows(idx);
            let yk: Vec<f64> = idx.iter().map(|&i| targets[i]).collect();
            let phi = kernel_matrix(&kernel, &centers, &centers, 0, 0)?;
            let (w, rep) = numerics::solve_square(&phi, &yk, None)?;
            Ok((RbfCluster { centers, w }, rep.fell_back()))
        })
        .collect::<Result<_>>()?;
    let local_fallbacks = fitted.iter().filter(|(_, f)| *f).count();
    let clusters: Vec<RbfCluster> = fitted.into_iter().map(|(c, _)| c).collect();
    let local_solve = seconds_since(t0);

    let t1 = Instant::now();
    let g = global_matrix(&kernel, &clusters, &ds.x, 0, 0, true);
    let (output, output_solve) = numerics::least_squares(&g, &targets)?;
    let output_time = seconds_since(t1);

    let net = RbfNet { kernel, clusters, output, norm, n_features: ds.n_features() };
    let train_predictions: Vec<f64> = g.mul_vec(&net.output)?.into_iter().map(|s| net.denorm(s)).collect();
    let train_mae = mean_abs_diff(&train_predictions, &ds.y);
    let mut warnings = Vec::new();
    if local_fallbacks > 0 {
        warnings.push(format!("{local_fallbacks} kernel matrix(es) were singular; used the pseudo-inverse"));
    }
    if output_solve.fell_back() {
        warnings.push("output layer normal equations were ill-conditioned; used a rank-revealing solve".to_string());
    }
    let report = FitReport {
        neurons: net.clusters.len(),
        train_predictions,
        train_mae,
        local_fallbacks,
        output_solve,
        timings: PhaseTimings { cluster: 0.0, local_solve, output_solve: output_time },
        warnings,
    };
    Ok((net, report))
}

/// `q × N` (or `q × (N+1)` with a ones column) matrix whose column `k` is the
/// differentiated expansion of cluster `k` at every point.
pub fn global_matrix(kernel: &Kernel, clusters: &[RbfCluster], points: &Matrix, order: usize, p: usize, ones: bool) -> Matrix {
    let n_cols = clusters.len() + usize::from(ones);
    let mut g = Matrix::zeros(points.nrows(), n_cols);
    if n_cols == 0 {
        return g;
    }
    g.as_mut_slice().par_chunks_mut(n_cols).enumerate().for_each(|(i, row)| {
        let x = points.row(i);
        for (k, cl) in clusters.iter().enumerate() {
            row[k] = cl.expansion(kernel, x, order, p);
        }
        if ones {
            row[clusters.len()] = 1.0;
        }
    });
    g
}

impl RbfNet {
    fn denorm(&self, s: f64) -> f64 {
        self.norm.map_or(s, |p| p.denormalize(s))
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.ncols() != self.n_features {
            return Err(Error::shape(format!("{} features", self.n_features), x.ncols()));
        }
        Ok(())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.predict_derivative(x, 0, 0)
    }

    /// `∂ˡf/∂x_pˡ` of the fitted surface. Normalized fits are mapped back with the
    /// affine chain rule.
    pub fn predict_derivative(&self, x: &Matrix, order: usize, p: usize) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.kernel.check_order(order)?;
        if order > 0 && p >= self.n_features {
            return Err(Error::InvalidArgument(format!("dimension {p} out of range for {} features", self.n_features)));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("inputs"));
        }
        let g = global_matrix(&self.kernel, &self.clusters, x, order, p, order == 0);
        let v = if order == 0 { &self.output[..] } else { &self.output[..self.clusters.len()] };
        let raw = g.mul_vec(v)?;
        Ok(match (self.norm, order) {
            (None, _) => raw,
            (Some(np), 0) => raw.into_iter().map(|s| np.denormalize(s)).collect(),
            (Some(np), _) => raw.into_iter().map(|s| s / np.scale()).collect(),
        })
    }
}

pub fn predict_rbf(net: &RbfNet, x: &Matrix) -> Result<Vec<f64>> {
    net.predict(x)
}

pub fn predict_derivative(net: &RbfNet, x: &Matrix, order: usize, p: usize) -> Result<Vec<f64>> {
    net.predict_derivative(x, order, p)
}

/// Log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeSearch {
    pub best_c: f64,
    /// `(c, validation MAE)` for every candidate.
    pub scores: Vec<(f64, f64)>,
}

/// Picks the shape parameter with the lowest MAE on a held-out fraction of
/// `ds`. One partition of the fitting rows is shared by every candidate.
pub fn select_shape(ds: &Dataset, cfg: &RbfConfig, grid: &[f64], val_fraction: f64) -> Result<ShapeSearch> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty shape-parameter grid".to_string()));
    }
    let (fit_idx, val_idx) = split_indices(ds.len(), val_fraction, cfg.seed)?;
    let (fit_ds, val_ds) = (ds.subset(&fit_idx), ds.subset(&val_idx));
    let neurons = cfg.resolve_neurons(fit_ds.len())?;
    let assignment = clustering::partition(&fit_ds.x, neurons, cfg.mode, cfg.seed, cfg.max_iter)?;
    let mut scores = Vec::with_capacity(grid.len());
    for &c in grid {
        let trial = RbfConfig { kernel: Kernel::new(cfg.kernel.kind, c)?, ..*cfg };
        let (net, _) = fit_rbf_with_assignment(&fit_ds, &trial, &assignment)?;
        scores.push((c, mean_abs_diff(&net.predict(&val_ds.x)?, &val_ds.y)));
    }
    let best_c = scores.iter().min_by(|a, b| a.1.total_cmp(&b.1)).map(|s| s.0).unwrap_or(grid[0]);
    Ok(ShapeSearch { best_c, scores })
}
