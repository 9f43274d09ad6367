//! Meshless collocation for linear differential equations `T f = h`.
//!
//! The operator `T = Σ g_t(x) ∂^{l_t}/∂x_{p_t}^{l_t}` is applied to the kernel
//! expansion of each neighborhood. Interior rows enforce the equation at the
//! neighborhood's own points and every boundary row is appended to each local
//! system, which is then solved in the minimum-norm least-squares sense. The
//! output layer combines the local solutions over all interior and boundary
//! rows. The result is an ordinary [`RbfNet`], so the solution and all of its
//! derivatives come from the same weights.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::clustering::{self, Assignment, ClusterMode, DEFAULT_MAX_ITER};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numerics::{self, SolveReport};
use crate::rbf_net::{kernel_matrix, Kernel, RbfCluster, RbfNet};
use crate::report::{seconds_since, PhaseTimings};

#[derive(Clone)]
pub enum Coefficient {
    Const(f64),
    /// The `p`-th coordinate of the evaluation point.
    Coordinate(usize),
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl Coefficient {
    #[inline]
    pub fn at(&self, x: &[f64]) -> f64 {
        match self {
            Coefficient::Const(c) => *c,
            Coefficient::Coordinate(p) => x[*p],
            Coefficient::Custom(f) => f(x),
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Const(c) => write!(f, "Const({c})"),
            Coefficient::Coordinate(p) => write!(f, "Coordinate({p})"),
            Coefficient::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OperatorTerm {
    pub coefficient: Coefficient,
    pub order: usize,
    /// Ignored when `order == 0`.
    pub dim: usize,
}

impl OperatorTerm {
    pub fn new(coefficient: Coefficient, order: usize, dim: usize) -> Self {
        OperatorTerm { coefficient, order, dim }
    }

    pub fn identity() -> Self {
        OperatorTerm::new(Coefficient::Const(1.0), 0, 0)
    }

    /// `Σ_p ∂²/∂x_p²` in `n` dimensions.
    pub fn laplacian(n: usize) -> Vec<OperatorTerm> {
        (0..n).map(|p| OperatorTerm::new(Coefficient::Const(1.0), 2, p)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    Value,
    Derivative { order: usize, dim: usize },
}

#[derive(Debug, Clone)]
pub struct BoundarySet {
    pub points: Matrix,
    pub values: Vec<f64>,
    pub condition: BoundaryCondition,
}

#[derive(Debug, Clone)]
pub struct PdeProblem {
    pub terms: Vec<OperatorTerm>,
    pub interior: Matrix,
    pub source: Vec<f64>,
    pub boundary: Vec<BoundarySet>,
    pub kernel: Kernel,
}

impl PdeProblem {
    pub fn dim(&self) -> usize {
        self.interior.ncols()
    }

    pub fn boundary_rows(&self) -> usize {
        self.boundary.iter().map(|b| b.points.nrows()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.interior.nrows() == 0 {
            return Err(Error::TooFewObservations { have: 0, need: 1 });
        }
        if self.source.len() != self.interior.nrows() {
            return Err(Error::shape(format!("{} source values", self.interior.nrows()), self.source.len()));
        }
        if self.terms.is_empty() {
            return Err(Error::InvalidArgument("operator has no terms".to_string()));
        }
        self.kernel.check_dimension(n)?;
        for t in &self.terms {
            self.kernel.check_order(t.order)?;
            if t.order > 0 && t.dim >= n {
                return Err(Error::InvalidArgument(format!("operator term differentiates dimension {} of {n}", t.dim)));
            }
            if let Coefficient::Coordinate(p) = t.coefficient {
                if p >= n {
                    return Err(Error::InvalidArgument(format!("coefficient uses coordinate {p} of {n}")));
                }
            }
        }
        if !self.interior.is_finite() || !self.source.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("interior collocation data"));
        }
        let interior: HashSet<Vec<u64>> = self.interior.rows().map(point_key).collect();
        for b in &self.boundary {
            if b.points.ncols() != n {
                return Err(Error::shape(format!("{n}-dimensional boundary points"), b.points.ncols()));
            }
            if b.values.len() != b.points.nrows() {
                return Err(Error::shape(format!("{} boundary values", b.points.nrows()), b.values.len()));
            }
            if !b.points.is_finite() || !b.values.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("boundary data"));
            }
            if let BoundaryCondition::Derivative { order, dim } = b.condition {
                self.kernel.check_order(order)?;
                if dim >= n {
                    return Err(Error::InvalidArgument(format!("boundary derivative along dimension {dim} of {n}")));
                }
            }
            if let Some(r) = b.points.rows().find(|r| interior.contains(&point_key(r))) {
                return Err(Error::InvalidArgument(format!("point {r:?} is both interior and boundary")));
            }
        }
        Ok(())
    }
}

fn point_key(p: &[f64]) -> Vec<u64> {
    p.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// `q × m_k` matrix with entries `Σ_t g_t(x_i) ∂^{l_t}φ(c_j, x_i)/∂x_{p_t}^{l_t}`.
pub fn assemble_operator_rows(terms: &[OperatorTerm], kernel: &Kernel, centers: &Matrix, points: &Matrix) -> Result<Matrix> {
    let mut out = Matrix::zeros(points.nrows(), centers.nrows());
    for t in terms {
        let k = kernel_matrix(kernel, centers, points, t.order, t.dim)?;
        for i in 0..points.nrows() {
            let g = t.coefficient.at(points.row(i));
            for (o, v) in out.row_mut(i).iter_mut().zip(k.row(i)) {
                *o += g * v;
            }
        }
    }
    Ok(out)
}

fn boundary_rows(set: &BoundarySet, kernel: &Kernel, centers: &Matrix) -> Result<Matrix> {
    match set.condition {
        BoundaryCondition::Value => kernel_matrix(kernel, centers, &set.points, 0, 0),
        BoundaryCondition::Derivative { order, dim } => kernel_matrix(kernel, centers, &set.points, order, dim),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeConfig {
    pub neurons: usize,
    pub mode: ClusterMode,
    pub max_iter: usize,
    pub seed: u64,
    /// Multiplies every boundary row and its value.
    pub boundary_weight: f64,
}

impl Default for PdeConfig {
    fn default() -> Self {
        PdeConfig { neurons: 1, mode: ClusterMode::KMeans, max_iter: DEFAULT_MAX_ITER, seed: 0, boundary_weight: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdeReport {
    pub neurons: usize,
    pub interior_rows: usize,
    pub boundary_rows: usize,
    pub local_max_residual: f64,
    pub output_solve: SolveReport,
    pub timings: PhaseTimings,
    pub warnings: Vec<String>,
}

pub fn solve_pde(problem: &PdeProblem, cfg: &PdeConfig) -> Result<(RbfNet, PdeReport)> {
    problem.validate()?;
    if !(cfg.boundary_weight > 0.0 && cfg.boundary_weight.is_finite()) {
        return Err(Error::InvalidArgument(format!("boundary weight must be positive, got {}", cfg.boundary_weight)));
    }
    let q = problem.interior.nrows();
    if cfg.neurons == 0 || cfg.neurons > q {
        return Err(Error::InvalidArgument(format!("cluster count must lie in [1, {q}], got {}", cfg.neurons)));
    }
    let t0 = Instant::now();
    let assignment = if cfg.neurons == 1 {
        Assignment::from_labels(vec![0; q], 1)?
    } else {
        clustering::partition(&problem.interior, cfg.neurons, cfg.mode, cfg.seed, cfg.max_iter)?
    };
    let cluster = seconds_since(t0);

    let mut warnings = Vec::new();
    if problem.boundary.is_empty() && problem.terms.iter().all(|t| t.order > 0) {
        warnings.push("no boundary rows: the operator annihilates constants, so the solution is not unique".to_string());
    }
    let bw = cfg.boundary_weight;
    let boundary_values: Vec<f64> = problem.boundary.iter().flat_map(|b| b.values.iter().map(|v| v * bw)).collect();

    let t1 = Instant::now();
    let local: Vec<(RbfCluster, f64)> = assignment
        .members()
        .par_iter()
        .map(|idx| {
            let centers = problem.interior.select_rows(idx);
            let mut a = assemble_operator_rows(&problem.terms, &problem.kernel, &centers, &centers)?;
            for set in &problem.boundary {
                let mut rows = boundary_rows(set, &problem.kernel, &centers)?;
                rows.as_mut_slice().iter_mut().for_each(|v| *v *= bw);
                a = a.vstack(&rows)?;
            }
            let rhs: Vec<f64> = idx.iter().map(|&i| problem.source[i]).chain(boundary_values.iter().copied()).collect();
            let (w, rep) = numerics::solve_rectangular(&a, &rhs)?;
            Ok((RbfCluster { centers, w }, rep.max_residual))
        })
        .collect::<Result<_>>()?;
    let local_max_residual = local.iter().map(|l| l.1).fold(0.0, f64::max);
    let clusters: Vec<RbfCluster> = local.into_iter().map(|l| l.0).collect();
    let local_solve = seconds_since(t1);

    let t2 = Instant::now();
    let nk = clusters.len();
    let b_rows = problem.boundary_rows();
    let mut g = Matrix::zeros(q + b_rows, nk + 1);
    for (k, cl) in clusters.iter().enumerate() {
        let col = assemble_operator_rows(&problem.terms, &problem.kernel, &cl.centers, &problem.interior)?.mul_vec(&cl.w)?;
        for (i, v) in col.into_iter().enumerate() {
            g[(i, k)] = v;
        }
        let mut r = q;
        for set in &problem.boundary {
            let col = boundary_rows(set, &problem.kernel, &cl.centers)?.mul_vec(&cl.w)?;
            for v in col {
                g[(r, k)] = v * bw;
                r += 1;
            }
        }
    }
    // T applied to the constant bias keeps only zeroth-order terms
    for i in 0..q {
        let x = problem.interior.row(i);
        g[(i, nk)] = problem.terms.iter().filter(|t| t.order == 0).map(|t| t.coefficient.at(x)).sum();
    }
    let mut r = q;
    for set in &problem.boundary {
        let one = if set.condition == BoundaryCondition::Value { bw } else { 0.0 };
        for _ in 0..set.points.nrows() {
            g[(r, nk)] = one;
            r += 1;
        }
    }
    let targets: Vec<f64> = problem.source.iter().copied().chain(boundary_values).collect();
    let (output, output_solve) = numerics::least_squares(&g, &targets)?;
    let output_time = seconds_since(t2);
    if output_solve.fell_back() {
        warnings.push("output layer normal equations were ill-conditioned; used a rank-revealing solve".to_string());
    }

    let net = RbfNet { kernel: problem.kernel, clusters, output, norm: None, n_features: problem.dim() };
    let report = PdeReport {
        neurons: nk,
        interior_rows: q,
        boundary_rows: b_rows,
        local_max_residual,
        output_solve,
        timings: PhaseTimings { cluster, local_solve, output_solve: output_time },
        warnings,
    };
    Ok((net, report))
}

/// `T f` at each row of `points`, built from the network's own derivatives.
pub fn apply_operator(net: &RbfNet, terms: &[OperatorTerm], points: &Matrix) -> Result<Vec<f64>> {
    let mut out = vec![0.0; points.nrows()];
    for t in terms {
        let d = net.predict_derivative(points, t.order, t.dim)?;
        for (i, (o, v)) in out.iter_mut().zip(d).enumerate() {
            *o += t.coefficient.at(points.row(i)) * v;
        }
    }
    Ok(out)
}

/// `T f(x_i) − h(x_i)` over the interior collocation points.
pub fn pde_residual(net: &RbfNet, problem: &PdeProblem) -> Result<Vec<f64>> {
    let tf = apply_operator(net, &problem.terms, &problem.interior)?;
    Ok(tf.into_iter().zip(&problem.source).map(|(a, h)| a - h).collect())
}

/// Harmonic function on `[0,a]×[0,b]` equal to `f0 sin(πx/a)` on `y = b` and
/// zero on the other three sides.
pub fn laplace_exact(a: f64, b: f64, f0: f64, x: f64, y: f64) -> f64 {
    use std::f64::consts::PI;
    f0 / (PI * b / a).sinh() * (PI * x / a).sin() * (PI * y / a).sinh()
}

/// Median distance from each point to its nearest neighbour.
pub fn median_spacing(points: &Matrix) -> f64 {
    let m = points.nrows();
    if m < 2 {
        return 0.0;
    }
    let mut nn: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let p = points.row(i);
            (0..m)
                .filter(|&j| j != i)
                .map(|j| clustering::sq_dist(p, points.row(j)))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    let mid = m / 2;
    if m % 2 == 1 {
        nn[mid]
    } else {
        0.5 * (nn[mid - 1] + nn[mid])
    }
}

/// Gaussian kernel for collocation on `points`: `c = (7 h)²` with `h` the
/// median nearest-neighbour spacing.
pub fn default_kernel(points: &Matrix) -> Kernel {
    let h = median_spacing(points);
    let c = (7.0 * h).powi(2);
    Kernel::gaussian(if c > 0.0 { c } else { 1.0 })
}
