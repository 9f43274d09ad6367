//! Synthetic problems, error metrics and experiment runners.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::activation::ActivationKind;
use crate::clustering::{self, ClusterMode};
use crate::dataset::{self, Dataset};
use crate::ensemble::{self, BaseConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::pde::{self, BoundaryCondition, BoundarySet, OperatorTerm, PdeConfig, PdeProblem};
use crate::rbf_net::{self, Kernel, RbfConfig, RbfNet};
use crate::report::{seconds_since, PhaseTimings};
use crate::rng::SeededRng;
use crate::sigmoid_net::{self, SigmoidConfig};

/// Default sampling box for the Griewank benchmark.
pub const GRIEWANK_DOMAIN: (f64, f64) = (-5.0, 5.0);

pub fn f1d(x: f64) -> f64 {
    0.3 * (3.0 * x).exp().sin() + 0.5
}

pub fn poly5(x: &[f64]) -> f64 {
    -x[0] + x[1].powi(2) / 2.0 - x[2].powi(3) / 3.0 + x[3].powi(4) / 4.0 - x[4].powi(5) / 5.0
}

pub fn griewank(x: &[f64]) -> f64 {
    let sum: f64 = x.iter().map(|v| v * v).sum::<f64>() / 4000.0;
    let prod: f64 = x.iter().enumerate().map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos()).product();
    1.0 + sum - prod
}

/// Draws all inputs first, then one noise value per row when `h > 0`, so the
/// noisy and noiseless sets of one seed share their inputs.
fn generate(m: usize, n: usize, h: f64, seed: u64, lo: f64, hi: f64, f: impl Fn(&[f64]) -> f64) -> Result<Dataset> {
    if m < 2 {
        return Err(Error::TooFewObservations { have: m, need: 2 });
    }
    if !(h >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise half-width must be non-negative, got {h}")));
    }
    let mut rng = SeededRng::new(seed);
    let x = Matrix::from_fn(m, n, |_, _| rng.uniform_in(lo, hi));
    let y = x.rows().map(|r| f(r) + if h > 0.0 { rng.uniform_in(-h, h) } else { 0.0 }).collect();
    Dataset::new(x, y)
}

/// `x ~ U(0,1)`, `y = 0.3 sin(e^{3x}) + 0.5 + U(−h, h)`.
pub fn gen_1d(m: usize, noise_halfwidth: f64, seed: u64) -> Result<Dataset> {
    generate(m, 1, noise_halfwidth, seed, 0.0, 1.0, |x| f1d(x[0]))
}

/// Five inputs on `U(0.1, 0.9)` with an alternating polynomial response.
pub fn gen_poly5(m: usize, noise_halfwidth: f64, seed: u64) -> Result<Dataset> {
    generate(m, 5, noise_halfwidth, seed, 0.1, 0.9, poly5)
}

pub fn gen_griewank(m: usize, n: usize, noise_halfwidth: f64, seed: u64, domain: (f64, f64)) -> Result<Dataset> {
    if !(domain.0 < domain.1) {
        return Err(Error::InvalidArgument(format!("empty domain [{}, {}]", domain.0, domain.1)));
    }
    generate(m, n, noise_halfwidth, seed, domain.0, domain.1, griewank)
}

fn check_lengths(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.len() != actual.len() {
        return Err(Error::shape(format!("{} values", actual.len()), pred.len()));
    }
    if pred.is_empty() {
        return Err(Error::TooFewObservations { have: 0, need: 1 });
    }
    Ok(())
}

pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual)?;
    Ok(pred.iter().zip(actual).map(|(a, b)| (a - b).abs()).sum::<f64>() / pred.len() as f64)
}

/// Percentage of equal labels.
pub fn accuracy(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual)?;
    let hits = pred.iter().zip(actual).filter(|(a, b)| a == b).count();
    Ok(100.0 * hits as f64 / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub experiment: String,
    /// Every setting the run used, defaults included.
    pub config: Value,
    pub train_mae: f64,
    pub test_mae: f64,
    pub accuracy_per_class: Option<BTreeMap<String, f64>>,
    pub timings: PhaseTimings,
    pub seed: u64,
    /// Further named measurements, such as the Laplacian error of a PDE run.
    pub metrics: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("reports hold only finite numbers and strings")
    }
}

/// Plain-text table with one row per report.
pub fn summary_table(reports: &[RunReport]) -> String {
    let mut out = format!(
        "{:<28} {:>12} {:>12} {:>10} {:>10} {:>10}\n",
        "experiment", "train_mae", "test_mae", "cluster_s", "local_s", "output_s"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<28} {:>12.4e} {:>12.4e} {:>10.4} {:>10.4} {:>10.4}\n",
            r.experiment, r.train_mae, r.test_mae, r.timings.cluster, r.timings.local_solve, r.timings.output_solve
        ));
        if let Some(acc) = &r.accuracy_per_class {
            for (class, a) in acc {
                out.push_str(&format!("  class {class}: accuracy {a:.2}%\n"));
            }
        }
        for (k, v) in &r.metrics {
            out.push_str(&format!("  {k}: {v:.4e}\n"));
        }
    }
    out
}

fn report(experiment: &str, config: Value, train_mae: f64, test_mae: f64, timings: PhaseTimings, seed: u64) -> RunReport {
    RunReport {
        experiment: experiment.to_string(),
        config,
        train_mae,
        test_mae,
        accuracy_per_class: None,
        timings,
        seed,
        metrics: BTreeMap::new(),
    }
}

/// Sigmoid fits at each `m` with `n` inputs, using ascending partitions so the
/// local phase carries no clustering noise. Each phase time is the minimum
/// over `repeats` fits.
pub fn run_scaling_study_with(n_fixed: usize, m_list: &[usize], seed: u64, repeats: usize) -> Result<Vec<RunReport>> {
    let mut out = Vec::with_capacity(m_list.len());
    for (i, &m) in m_list.iter().enumerate() {
        if m < n_fixed + 1 {
            return Err(Error::TooFewObservations { have: m, need: n_fixed + 1 });
        }
        let ds = generate(m, n_fixed, 0.0, seed.wrapping_add(i as u64), 0.0, 1.0, |x| {
            x.iter().enumerate().map(|(j, v)| ((j + 1) as f64 * v).sin()).sum::<f64>()
        })?;
        let cfg = SigmoidConfig { mode: ClusterMode::Ascending, seed, ..SigmoidConfig::default() };
        let mut best: Option<(PhaseTimings, f64, usize)> = None;
        for _ in 0..repeats.max(1) {
            let (_, rep) = sigmoid_net::fit(&ds, &cfg)?;
            let t = match best {
                None => rep.timings,
                Some((b, _, _)) => PhaseTimings {
                    cluster: b.cluster.min(rep.timings.cluster),
                    local_solve: b.local_solve.min(rep.timings.local_solve),
                    output_solve: b.output_solve.min(rep.timings.output_solve),
                },
            };
            best = Some((t, rep.train_mae, rep.neurons));
        }
        let (timings, train_mae, neurons) = best.expect("at least one repeat");
        let config = json!({"n": n_fixed, "m": m, "neurons": neurons, "mode": "ascending", "repeats": repeats.max(1)});
        out.push(report("scaling", config, train_mae, train_mae, timings, seed));
    }
    Ok(out)
}

pub fn run_scaling_study(n_fixed: usize, m_list: &[usize], seed: u64) -> Result<Vec<RunReport>> {
    run_scaling_study_with(n_fixed, m_list, seed, 3)
}

/// Local-solve time ratios between consecutive scaling reports.
pub fn local_solve_ratios(reports: &[RunReport]) -> Vec<f64> {
    reports.windows(2).map(|w| w[1].timings.local_solve / w[0].timings.local_solve).collect()
}

/// Laplace equation on `[0,a]×[0,b]` with `f = f0 sin(πx/a)` on the top edge,
/// zero on the others, and an optional `U(0, noise)` source term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceSpec {
    pub a: f64,
    pub b: f64,
    pub f0: f64,
    pub dx: f64,
    pub dy: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for LaplaceSpec {
    fn default() -> Self {
        LaplaceSpec { a: 1.0, b: 1.0, f0: 1.0, dx: 0.02, dy: 0.02, noise: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct LaplaceGrid {
    pub problem: PdeProblem,
    /// All grid points, interior and boundary.
    pub points: Matrix,
    pub exact: Vec<f64>,
}

fn axis(len: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && len > 0.0) {
        return Err(Error::InvalidArgument(format!("grid needs positive length and spacing, got {len} and {step}")));
    }
    let k = (len / step).round() as usize;
    if k < 2 {
        return Err(Error::InvalidArgument(format!("spacing {step} leaves no interior points on length {len}")));
    }
    Ok((0..=k).map(|i| if i == k { len } else { i as f64 * step }).collect())
}

pub fn laplace_problem(spec: &LaplaceSpec, kernel: Option<Kernel>) -> Result<LaplaceGrid> {
    if !(spec.noise >= 0.0) {
        return Err(Error::InvalidArgument(format!("source noise must be non-negative, got {}", spec.noise)));
    }
    let xs = axis(spec.a, spec.dx)?;
    let ys = axis(spec.b, spec.dy)?;
    let (nx, ny) = (xs.len() - 1, ys.len() - 1);
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    let mut all = Vec::new();
    for (j, &y) in ys.iter().enumerate() {
        for (i, &x) in xs.iter().enumerate() {
            all.push([x, y]);
            if i == 0 || j == 0 || i == nx || j == ny {
                boundary.push([x, y]);
            } else {
                interior.push([x, y]);
            }
        }
    }
    let mut rng = SeededRng::new(spec.seed);
    let source = interior.iter().map(|_| if spec.noise > 0.0 { rng.uniform_in(0.0, spec.noise) } else { 0.0 }).collect();
    // exact top-edge values; the sine vanishes at both corners
    let values = boundary.iter().map(|p| if p[1] == spec.b { spec.f0 * (std::f64::consts::PI * p[0] / spec.a).sin() } else { 0.0 }).collect();
    let interior = Matrix::from_rows(&interior)?;
    let kernel = kernel.unwrap_or_else(|| pde::default_kernel(&interior));
    let exact = all.iter().map(|p| pde::laplace_exact(spec.a, spec.b, spec.f0, p[0], p[1])).collect();
    let problem = PdeProblem {
        terms: OperatorTerm::laplacian(2),
        interior,
        source,
        boundary: vec![BoundarySet { points: Matrix::from_rows(&boundary)?, values, condition: BoundaryCondition::Value }],
        kernel,
    };
    Ok(LaplaceGrid { problem, points: Matrix::from_rows(&all)?, exact })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceErrors {
    /// Solution MAE over every grid point.
    pub solution_mae: f64,
    /// MAE of the recovered Laplacian against the noise-free field, which is 0.
    pub laplacian_mae: f64,
    /// MAE of the recovered Laplacian against the source that was imposed.
    pub residual_mae: f64,
}

pub fn laplace_errors(net: &RbfNet, grid: &LaplaceGrid) -> Result<LaplaceErrors> {
    let f = net.predict(&grid.points)?;
    let lap = pde::apply_operator(net, &grid.problem.terms, &grid.problem.interior)?;
    let zeros = vec![0.0; lap.len()];
    Ok(LaplaceErrors {
        solution_mae: mae(&f, &grid.exact)?,
        laplacian_mae: mae(&lap, &zeros)?,
        residual_mae: mae(&lap, &grid.problem.source)?,
    })
}

/// Knobs shared by the suite runners; unset values fall back to each suite's defaults.
#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    pub seed: u64,
    pub mnist_dir: Option<PathBuf>,
    pub digits: Vec<u8>,
    pub subset: Option<usize>,
    pub neurons: Option<usize>,
}

pub const SUITES: [&str; 6] = ["f1d", "poly5", "griewank", "mnist", "scaling", "laplace"];

pub fn run_suite(name: &str, opts: &SuiteOptions) -> Result<Vec<RunReport>> {
    match name {
        "f1d" => suite_f1d(opts.seed),
        "poly5" => suite_poly5(opts.seed),
        "griewank" => suite_griewank(opts.seed, opts.neurons).map(|r| vec![r]),
        "mnist" => {
            let dir = opts.mnist_dir.clone().ok_or_else(|| Error::InvalidArgument("the mnist suite needs a data directory".to_string()))?;
            let digits = if opts.digits.is_empty() { (0..10).collect() } else { opts.digits.clone() };
            suite_mnist(&dir, &digits, opts.subset.unwrap_or(10_000), opts.neurons.unwrap_or(1000), opts.seed).map(|r| vec![r])
        }
        "scaling" => run_scaling_study(50, &[5000, 10_000, 20_000], opts.seed),
        "laplace" => suite_laplace(opts.seed),
        other => Err(Error::InvalidArgument(format!("unknown suite `{other}`; expected one of {}", SUITES.join(", ")))),
    }
}

/// Sigmoid and RBF fits of the one-dimensional curve, noiseless and noisy.
pub fn suite_f1d(seed: u64) -> Result<Vec<RunReport>> {
    let test = gen_1d(1000, 0.0, seed.wrapping_add(1))?;
    let mut out = Vec::new();
    for (label, h) in [("noiseless", 0.0), ("noisy", 0.05)] {
        let train = gen_1d(100, h, seed)?;
        let clean = gen_1d(100, 0.0, seed)?;
        let scfg = SigmoidConfig { neurons: Some(50), mode: ClusterMode::Balanced, seed, ..SigmoidConfig::default() };
        let (net, rep) = sigmoid_net::fit(&train, &scfg)?;
        let config = json!({"m": 100, "noise_halfwidth": h, "neurons": 50, "mode": "balanced", "activation": "logistic", "lo": 0.1, "hi": 0.9});
        out.push(report(
            &format!("f1d_sigmoid_{label}"),
            config,
            mae(&rep.train_predictions, &clean.y)?,
            mae(&net.predict(&test.x)?, &test.y)?,
            rep.timings,
            seed,
        ));
        let rcfg = RbfConfig { kernel: Kernel::gaussian(0.01), neurons: Some(1), seed, ..RbfConfig::default() };
        let (net, rep) = rbf_net::fit_rbf(&train, &rcfg)?;
        let config = json!({"m": 100, "noise_halfwidth": h, "neurons": 1, "kernel": "gaussian", "c": 0.01});
        out.push(report(
            &format!("f1d_rbf_{label}"),
            config,
            mae(&rep.train_predictions, &clean.y)?,
            mae(&net.predict(&test.x)?, &test.y)?,
            rep.timings,
            seed,
        ));
    }
    Ok(out)
}

/// Noisy five-variable training set, noiseless test set; single net and ensemble.
pub fn suite_poly5(seed: u64) -> Result<Vec<RunReport>> {
    let train = gen_poly5(1000, 0.05, seed)?;
    let test = gen_poly5(1000, 0.0, seed.wrapping_add(1))?;
    let cfg = SigmoidConfig { seed, ..SigmoidConfig::default() };
    let (net, rep) = sigmoid_net::fit(&train, &cfg)?;
    let config = json!({"m": 1000, "noise_halfwidth": 0.05, "neurons": rep.neurons, "mode": "kmeans"});
    let mut out = vec![report("poly5_sigmoid", config, rep.train_mae, mae(&net.predict(&test.x)?, &test.y)?, rep.timings, seed)];
    let t0 = Instant::now();
    let ens = ensemble::fit_ensemble(&train, &BaseConfig::Sigmoid(cfg), 10, 0.8, seed)?;
    let fit_time = seconds_since(t0);
    let config = json!({"m": 1000, "noise_halfwidth": 0.05, "members": 10, "alpha": 0.8, "mode": "kmeans"});
    out.push(report(
        "poly5_ensemble",
        config,
        mae(&ens.predict(&train.x)?, &train.y)?,
        mae(&ens.predict(&test.x)?, &test.y)?,
        PhaseTimings { local_solve: fit_time, ..PhaseTimings::default() },
        seed,
    ));
    Ok(out)
}

/// Grid of Gaussian shape parameters tried on the Griewank data.
pub fn griewank_shape_grid() -> Vec<f64> {
    rbf_net::log_grid(100.0, 1e5, 7)
}

/// 100-dimensional Griewank with `U(−½, ½)` noise: the shape parameter is
/// picked on a 20% validation split, then the net is refitted on all rows.
pub fn suite_griewank(seed: u64, neurons: Option<usize>) -> Result<RunReport> {
    let (m, n) = (10_000, 100);
    let train = gen_griewank(m, n, 0.5, seed, GRIEWANK_DOMAIN)?;
    let test = gen_griewank(2000, n, 0.0, seed.wrapping_add(1), GRIEWANK_DOMAIN)?;
    let neurons = neurons.unwrap_or(m / 20);
    let mut cfg = RbfConfig { neurons: Some(neurons), seed, ..RbfConfig::default() };
    let grid = griewank_shape_grid();
    let search = rbf_net::select_shape(&train, &cfg, &grid, 0.2)?;
    cfg.kernel = Kernel::gaussian(search.best_c);
    let (net, rep) = rbf_net::fit_rbf(&train, &cfg)?;
    let test_mae = mae(&net.predict(&test.x)?, &test.y)?;
    let mean = train.y.iter().sum::<f64>() / m as f64;
    let config = json!({
        "m": m, "n": n, "noise_halfwidth": 0.5, "domain": [GRIEWANK_DOMAIN.0, GRIEWANK_DOMAIN.1],
        "neurons": neurons, "kernel": "gaussian", "c": search.best_c, "c_grid": grid, "validation_fraction": 0.2,
    });
    let mut r = report("griewank_rbf", config, rep.train_mae, test_mae, rep.timings, seed);
    r.metrics.insert("constant_baseline_test_mae".to_string(), mae(&vec![mean; test.len()], &test.y)?);
    Ok(r)
}

/// Standard IDX file names inside an MNIST directory.
pub fn mnist_files(dir: &Path) -> [PathBuf; 4] {
    [
        dir.join("train-images-idx3-ubyte"),
        dir.join("train-labels-idx1-ubyte"),
        dir.join("t10k-images-idx3-ubyte"),
        dir.join("t10k-labels-idx1-ubyte"),
    ]
}

/// One-vs-rest digit models on the first `subset` training rows with an
/// ascending partition shared by all digits and the erf activation.
pub fn suite_mnist(dir: &Path, digits: &[u8], subset: usize, neurons: usize, seed: u64) -> Result<RunReport> {
    let [tri, trl, tei, tel] = mnist_files(dir);
    let train = dataset::load_mnist_idx(tri, trl)?;
    let test = dataset::load_mnist_idx(tei, tel)?;
    let rows: Vec<usize> = (0..subset.min(train.len())).collect();
    let train = train.subset(&rows);
    let t0 = Instant::now();
    let assignment = clustering::ascending_partition_into(train.len(), neurons)?.with_centers(&train.x)?;
    let cluster = seconds_since(t0);
    let cfg = SigmoidConfig { activation: ActivationKind::erf(), mode: ClusterMode::Ascending, seed, ..SigmoidConfig::classifier(0.01) };
    let mut acc = BTreeMap::new();
    let mut timings = PhaseTimings { cluster, ..PhaseTimings::default() };
    let mut train_err = 0.0;
    let mut test_err = 0.0;
    for &d in digits {
        let class = f64::from(d);
        let t1 = Instant::now();
        let net = sigmoid_net::fit_binary(&train, class, &cfg, &assignment)?;
        timings.local_solve += seconds_since(t1);
        let train_scores = net.predict(&train.x)?;
        let test_scores = net.predict(&test.x)?;
        train_err += 100.0 - sigmoid_net::binary_accuracy(&train_scores, &train.y, class);
        let a = sigmoid_net::binary_accuracy(&test_scores, &test.y, class);
        test_err += 100.0 - a;
        acc.insert(d.to_string(), a);
    }
    let k = digits.len().max(1) as f64;
    let config = json!({
        "subset": train.len(), "neurons": neurons, "activation": "erf", "eps": 0.01,
        "mode": "ascending", "digits": digits, "feature_scale": 1.0 / 255.0,
    });
    let mut r = report("mnist_binary", config, train_err / k, test_err / k, timings, seed);
    r.accuracy_per_class = Some(acc);
    Ok(r)
}

/// Laplace problem with and without the stochastic source term.
pub fn suite_laplace(seed: u64) -> Result<Vec<RunReport>> {
    let mut out = Vec::new();
    for (label, noise) in [("clean", 0.0), ("noisy_source", 0.1)] {
        let spec = LaplaceSpec { noise, seed, ..LaplaceSpec::default() };
        let grid = laplace_problem(&spec, None)?;
        let cfg = PdeConfig { seed, ..PdeConfig::default() };
        let (net, rep) = pde::solve_pde(&grid.problem, &cfg)?;
        let err = laplace_errors(&net, &grid)?;
        let config = json!({
            "a": spec.a, "b": spec.b, "f0": spec.f0, "dx": spec.dx, "dy": spec.dy, "noise": noise,
            "kernel": grid.problem.kernel.kind.name(), "c": grid.problem.kernel.c, "neurons": cfg.neurons,
        });
        let mut r = report(&format!("laplace_{label}"), config, err.solution_mae, err.solution_mae, rep.timings, seed);
        r.metrics.insert("laplacian_mae".to_string(), err.laplacian_mae);
        r.metrics.insert("residual_mae".to_string(), err.residual_mae);
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly5_hand_value() {
        let v = poly5(&[0.5; 5]);
        assert!((v - (-0.5 + 0.125 - 0.125 / 3.0 + 0.015625 - 0.00625)).abs() < 1e-15);
        assert!((v + 0.407_291_666_666_666_7).abs() < 1e-12);
    }

    #[test]
    fn griewank_hand_values() {
        assert_eq!(griewank(&[0.0; 7]), 0.0);
        let pi = std::f64::consts::PI;
        assert!((griewank(&[pi]) - (2.0 + pi * pi / 4000.0)).abs() < 1e-15);
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(gen_1d(20, 0.05, 3).unwrap().y, gen_1d(20, 0.05, 3).unwrap().y);
        assert_ne!(gen_1d(20, 0.05, 3).unwrap().y, gen_1d(20, 0.05, 4).unwrap().y);
        let clean = gen_1d(20, 0.0, 3).unwrap();
        assert!(clean.x.rows().zip(&clean.y).all(|(x, &y)| y == f1d(x[0])));
        assert_eq!(clean.x, gen_1d(20, 0.05, 3).unwrap().x);
    }

    #[test]
    fn noise_stays_in_band() {
        let noisy = gen_poly5(500, 0.05, 1).unwrap();
        let ok = noisy.x.rows().zip(&noisy.y).all(|(x, y)| (y - poly5(x)).abs() <= 0.05);
        assert!(ok);
        assert!(noisy.x.as_slice().iter().all(|&v| (0.1..0.9).contains(&v)));
        let g = gen_griewank(50, 3, 0.0, 1, (-1.0, 1.0)).unwrap();
        assert!(g.x.as_slice().iter().all(|&v| (-1.0..1.0).contains(&v)));
        assert!(gen_1d(1, 0.0, 0).is_err());
    }

    #[test]
    fn metric_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(mae(&a, &a).unwrap(), 0.0);
        assert_eq!(accuracy(&a, &a).unwrap(), 100.0);
        assert_eq!(mae(&[1.5, 2.5, 3.5], &a).unwrap(), 0.5);
        let labels: Vec<f64> = (0..10).map(f64::from).collect();
        let mut pred = labels.clone();
        pred[3] = 7.0;
        assert_eq!(accuracy(&pred, &labels).unwrap(), 90.0);
        assert!(matches!(mae(&a, &a[..2]), Err(Error::ShapeMismatch { .. })));
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn doubling_n_halves_default_neurons() {
        let m = 10_100;
        assert_eq!(clustering::default_neuron_count(m, 49).unwrap(), 202);
        assert_eq!(clustering::default_neuron_count(m, 99).unwrap(), 101);
    }

    #[test]
    fn scaling_reports_every_phase() {
        let reps = run_scaling_study_with(5, &[200, 400], 1, 1).unwrap();
        assert_eq!(reps.len(), 2);
        for r in &reps {
            assert!(r.timings.cluster >= 0.0 && r.timings.local_solve >= 0.0 && r.timings.output_solve >= 0.0);
            let line = r.to_json_line();
            assert!(line.contains("\"local_solve\"") && line.contains("\"output_solve\""));
        }
        assert_eq!(local_solve_ratios(&reps).len(), 1);
        assert!(run_scaling_study(10, &[5], 0).is_err());
    }

    #[test]
    fn laplace_grid_layout() {
        let grid = laplace_problem(&LaplaceSpec { dx: 0.25, dy: 0.25, ..LaplaceSpec::default() }, None).unwrap();
        assert_eq!(grid.points.nrows(), 25);
        assert_eq!(grid.problem.interior.nrows(), 9);
        assert_eq!(grid.problem.boundary_rows(), 16);
        let b = &grid.problem.boundary[0];
        for (p, v) in b.points.rows().zip(&b.values) {
            let expect = pde::laplace_exact(1.0, 1.0, 1.0, p[0], p[1]);
            assert!((v - expect).abs() < 1e-12, "{p:?}");
        }
        assert!(grid.problem.source.iter().all(|&s| s == 0.0));
        let noisy = laplace_problem(&LaplaceSpec { dx: 0.25, dy: 0.25, noise: 0.1, ..LaplaceSpec::default() }, None).unwrap();
        assert!(noisy.problem.source.iter().all(|&s| (0.0..0.1).contains(&s)));
    }

    #[test]
    fn unknown_suite_is_rejected() {
        assert!(matches!(run_suite("nope", &SuiteOptions::default()), Err(Error::InvalidArgument(_))));
    }
}
