//! `annbn`: train and apply neighborhood-fitted networks, solve PDE problem
//! files, and run the benchmark suites.
//!
//! Exit codes: 0 success, 1 data or model error, 2 usage error.

mod problem;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use annbn_core::benchmarks::{self, mae, RunReport, SuiteOptions, SUITES};
use annbn_core::deep::deepen;
use annbn_core::ensemble::fit_ensemble;
use annbn_core::pde::{self, pde_residual};
use annbn_core::sigmoid_net::{self, fit_classifier};
use annbn_core::{
    dataset, rbf_net, ActivationKind, BaseConfig, ClusterMode, Dataset, DeepConfig, FeatureTransform, Kernel, KernelKind, Model,
    ModelFile, PdeConfig, PhaseTimings, RbfConfig, Sigmoid, SigmoidConfig,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use problem::{read_problem, ProblemError, ProblemSpec};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] annbn_core::Error),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "annbn", version, about = "Gradient-free network training by neighborhoods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a CSV file and save it.
    Train(TrainArgs),
    /// Apply a saved model to a CSV file.
    Predict(PredictArgs),
    /// Solve a linear PDE described by a problem file.
    SolvePde(SolvePdeArgs),
    /// Run a named benchmark suite.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelKind {
    Sigmoid,
    Rbf,
    Deep,
    Ensemble,
    Classifier,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BaseKind {
    Sigmoid,
    Rbf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training data as numeric CSV.
    #[arg(long)]
    data: PathBuf,
    /// Target column name; defaults to the last column.
    #[arg(long)]
    target: Option<String>,
    /// The CSV file has no header row.
    #[arg(long)]
    no_header: bool,
    #[arg(long, value_enum, default_value_t = ModelKind::Sigmoid)]
    model: ModelKind,
    /// Activation for sigmoid, deep, classifier and sigmoid-based ensembles.
    #[arg(long, default_value = "logistic", value_parser = parse_from_str::<Sigmoid>)]
    activation: Sigmoid,
    #[arg(long, default_value = "gaussian", value_parser = parse_from_str::<KernelKind>)]
    kernel: KernelKind,
    /// Kernel shape parameter.
    #[arg(long, default_value_t = 0.01)]
    c: f64,
    /// Neurons (sigmoid) or clusters (rbf); `auto` picks the default.
    #[arg(long, default_value = "auto", value_parser = parse_neurons)]
    neurons: NeuronCount,
    #[arg(long, default_value = "kmeans", value_parser = parse_from_str::<ClusterMode>)]
    mode: ClusterMode,
    /// Lower end of the target scaling range.
    #[arg(long, default_value_t = 0.1)]
    lo: f64,
    /// Upper end of the target scaling range.
    #[arg(long, default_value_t = 0.9)]
    hi: f64,
    /// Classifier targets are mapped onto [eps, 1 - eps].
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    /// Hidden layers of a deep model.
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Ensemble members.
    #[arg(long, default_value_t = 10)]
    members: usize,
    /// Fraction of rows each ensemble member trains on.
    #[arg(long, default_value_t = 0.8)]
    alpha: f64,
    /// Model family of the ensemble members.
    #[arg(long, value_enum, default_value_t = BaseKind::Sigmoid)]
    base: BaseKind,
    /// Rescale every feature column onto [0, 1] before fitting.
    #[arg(long, conflicts_with = "scale")]
    minmax: bool,
    /// Multiply every feature by this constant before fitting.
    #[arg(long)]
    scale: Option<f64>,
    /// Fraction of rows held out for a test score.
    #[arg(long, default_value_t = 0.0)]
    holdout: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the model file.
    #[arg(long)]
    out: PathBuf,
    /// Also write the run report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Model file written by `train` or `solve-pde`.
    #[arg(long)]
    model: PathBuf,
    /// Inputs as numeric CSV.
    #[arg(long)]
    data: PathBuf,
    /// Column holding known targets; it is dropped from the inputs and scored.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    no_header: bool,
    /// Where to write the predictions.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolvePdeArgs {
    /// Problem description file.
    problem: PathBuf,
    /// Override the kernel family.
    #[arg(long, value_parser = parse_from_str::<KernelKind>, requires = "c")]
    kernel: Option<KernelKind>,
    /// Override the kernel shape parameter.
    #[arg(long)]
    c: Option<f64>,
    /// Override the grid spacing of a built-in problem in both directions.
    #[arg(long)]
    dx: Option<f64>,
    /// Override the vertical grid spacing of a built-in problem.
    #[arg(long)]
    dy: Option<f64>,
    /// Add a U(0, noise) source to a built-in problem.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    neurons: usize,
    #[arg(long, default_value = "kmeans", value_parser = parse_from_str::<ClusterMode>)]
    mode: ClusterMode,
    /// Multiplier on every boundary row.
    #[arg(long, default_value_t = 1.0)]
    boundary_weight: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the fitted surrogate.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the run report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for `reports.jsonl` and `summary.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// MNIST IDX directory; defaults to $ANNBN_MNIST_DIR.
    #[arg(long)]
    mnist_dir: Option<PathBuf>,
    /// Comma-separated digits for the mnist suite.
    #[arg(long, value_delimiter = ',')]
    digits: Vec<u8>,
    /// Training rows used by the mnist suite.
    #[arg(long)]
    subset: Option<usize>,
    /// Neuron count for suites that take one.
    #[arg(long)]
    neurons: Option<usize>,
}

fn parse_from_str<T: std::str::FromStr<Err = annbn_core::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: annbn_core::Error| e.to_string())
}

/// `None` stands for `auto`.
#[derive(Clone, Copy, Debug)]
struct NeuronCount(Option<usize>);

fn parse_neurons(s: &str) -> Result<NeuronCount, String> {
    if s == "auto" {
        return Ok(NeuronCount(None));
    }
    s.parse().map(|n| NeuronCount(Some(n))).map_err(|_| format!("expected a positive integer or `auto`, got `{s}`"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let threads = annbn_core::threads_from_env().map_err(|e| CliError::Usage(e.to_string()))?;
    annbn_core::configure_threads(threads);
    match cli.command {
        Command::Train(a) => train(&a),
        Command::Predict(a) => predict(&a),
        Command::SolvePde(a) => solve_pde(&a),
        Command::Bench(a) => bench(&a),
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn emit(reports: &[RunReport], report_path: Option<&Path>) -> CliResult<()> {
    let lines: String = reports.iter().map(|r| r.to_json_line() + "\n").collect();
    print!("{lines}");
    eprint!("{}", benchmarks::summary_table(reports));
    if let Some(p) = report_path {
        write_file(p, &lines)?;
    }
    Ok(())
}

fn train(a: &TrainArgs) -> CliResult<()> {
    if !(0.0..1.0).contains(&a.holdout) {
        return Err(CliError::Usage(format!("--holdout must lie in [0, 1), got {}", a.holdout)));
    }
    let full = dataset::load_csv(&a.data, a.target.as_deref(), !a.no_header)?;
    let (train, test) = if a.holdout > 0.0 {
        let (train, test) = dataset::split(&full, a.holdout, a.seed)?;
        (train, Some(test))
    } else {
        (full, None)
    };
    let transform = match (a.minmax, a.scale) {
        (true, _) => FeatureTransform::fit_min_max(&train.x),
        (false, Some(s)) => FeatureTransform::Scale(s),
        (false, None) => FeatureTransform::Identity,
    };
    let fit_data = Dataset { x: transform.apply(&train.x)?, ..train.clone() };

    let activation = ActivationKind::new(a.activation, annbn_core::activation::DEFAULT_CLAMP_EPS)?;
    let scfg = SigmoidConfig { activation, neurons: a.neurons.0, mode: a.mode, lo: a.lo, hi: a.hi, seed: a.seed, ..SigmoidConfig::default() };
    let kernel = Kernel::new(a.kernel, a.c)?;
    let rcfg = RbfConfig { kernel, neurons: a.neurons.0, mode: a.mode, seed: a.seed, ..RbfConfig::default() };

    let mut config = json!({
        "data": a.data.display().to_string(),
        "target": fit_data.target_name,
        "rows": fit_data.len(),
        "features": fit_data.n_features(),
        "model": format!("{:?}", a.model).to_lowercase(),
        "mode": a.mode.to_string(),
        "holdout": a.holdout,
        "transform": match transform { FeatureTransform::Identity => "identity", FeatureTransform::Scale(_) => "scale", FeatureTransform::MinMax { .. } => "minmax" },
    });
    let extra = &mut config.as_object_mut().expect("config is an object");
    let mut timings = PhaseTimings::default();
    let model = match a.model {
        ModelKind::Sigmoid => {
            let (net, rep) = sigmoid_net::fit(&fit_data, &scfg)?;
            extra.extend([("activation".into(), json!(a.activation)), ("neurons".into(), json!(rep.neurons)), ("lo".into(), json!(a.lo)), ("hi".into(), json!(a.hi))]);
            timings = rep.timings;
            Model::Sigmoid(net)
        }
        ModelKind::Rbf => {
            let (net, rep) = rbf_net::fit_rbf(&fit_data, &rcfg)?;
            extra.extend([("kernel".into(), json!(a.kernel)), ("c".into(), json!(a.c)), ("neurons".into(), json!(rep.neurons))]);
            timings = rep.timings;
            Model::Rbf(net)
        }
        ModelKind::Deep => {
            let (net, rep) = sigmoid_net::fit(&fit_data, &scfg)?;
            let dcfg = DeepConfig { lo: a.lo, hi: a.hi, seed: a.seed, ..DeepConfig::default() };
            let (deep, _) = deepen(&net, &fit_data, a.depth, &dcfg)?;
            extra.extend([
                ("activation".into(), json!(a.activation)),
                ("neurons".into(), json!(rep.neurons)),
                ("depth".into(), json!(a.depth)),
                ("jitter".into(), json!(dcfg.jitter)),
            ]);
            timings = rep.timings;
            Model::Deep(deep)
        }
        ModelKind::Ensemble => {
            let base = match a.base {
                BaseKind::Sigmoid => BaseConfig::Sigmoid(scfg),
                BaseKind::Rbf => BaseConfig::Rbf(rcfg),
            };
            let ens = fit_ensemble(&fit_data, &base, a.members, a.alpha, a.seed)?;
            extra.extend([
                ("base".into(), json!(format!("{:?}", a.base).to_lowercase())),
                ("members".into(), json!(a.members)),
                ("alpha".into(), json!(a.alpha)),
                ("fold_errors".into(), json!(ens.fold_errors)),
            ]);
            Model::Ensemble(ens)
        }
        ModelKind::Classifier => {
            let cfg = SigmoidConfig { lo: a.eps, hi: 1.0 - a.eps, ..scfg };
            let (clf, rep) = fit_classifier(&fit_data, &cfg)?;
            extra.extend([("activation".into(), json!(a.activation)), ("eps".into(), json!(a.eps)), ("classes".into(), json!(clf.classes))]);
            timings = rep.timings;
            Model::Classifier(clf)
        }
    };
    let file = ModelFile { transform, model };
    file.save(&a.out)?;

    let train_pred = file.predict(&train.x)?;
    let test_pred = match &test {
        Some(t) => Some(file.predict(&t.x)?),
        None => None,
    };
    let mut report = RunReport {
        experiment: format!("train_{}", file.model.kind()),
        config,
        train_mae: mae(&train_pred, &train.y)?,
        test_mae: match (&test_pred, &test) {
            (Some(p), Some(t)) => mae(p, &t.y)?,
            _ => f64::NAN,
        },
        accuracy_per_class: None,
        timings,
        seed: a.seed,
        metrics: Default::default(),
    };
    if let Model::Classifier(clf) = &file.model {
        report.metrics.insert("train_accuracy".into(), benchmarks::accuracy(&train_pred, &train.y)?);
        if let (Some(p), Some(test)) = (&test_pred, &test) {
            report.metrics.insert("test_accuracy".into(), benchmarks::accuracy(p, &test.y)?);
            let scores = clf.scores(&file.transform.apply(&test.x)?)?;
            let per_class = clf
                .classes
                .iter()
                .enumerate()
                .map(|(c, &label)| (format!("{label}"), sigmoid_net::binary_accuracy(&scores.column(c), &test.y, label)))
                .collect();
            report.accuracy_per_class = Some(per_class);
        }
    }
    emit(&[report], a.report.as_deref())
}

fn predict(a: &PredictArgs) -> CliResult<()> {
    let file = ModelFile::load(&a.model)?;
    let (x, y) = match &a.target {
        Some(t) => {
            let ds = dataset::load_csv(&a.data, Some(t), !a.no_header)?;
            (ds.x, Some(ds.y))
        }
        None => (dataset::load_csv_features(&a.data, !a.no_header)?, None),
    };
    let pred = file.predict(&x)?;
    let mut out = String::from("prediction\n");
    for p in &pred {
        out.push_str(&format!("{p:?}\n"));
    }
    write_file(&a.out, &out)?;
    let mut summary = json!({"model": file.model.kind(), "rows": pred.len()});
    if let Some(y) = y {
        summary["mae"] = json!(mae(&pred, &y)?);
    }
    println!("{summary}");
    Ok(())
}

fn solve_pde(a: &SolvePdeArgs) -> CliResult<()> {
    let spec = read_problem(&a.problem)?;
    let override_kernel = match (a.kernel, a.c) {
        (kind, Some(c)) => Some(Kernel::new(kind.unwrap_or(KernelKind::Gaussian), c)?),
        (_, None) => None,
    };
    let cfg = PdeConfig { neurons: a.neurons, mode: a.mode, seed: a.seed, boundary_weight: a.boundary_weight, ..PdeConfig::default() };

    let (grid, problem, experiment) = match spec {
        ProblemSpec::LaplaceRect { mut spec, kernel } => {
            if let Some(dx) = a.dx {
                spec.dx = dx;
                spec.dy = dx;
            }
            if let Some(dy) = a.dy {
                spec.dy = dy;
            }
            spec.noise = a.noise;
            spec.seed = a.seed;
            let grid = benchmarks::laplace_problem(&spec, override_kernel.or(kernel))?;
            let problem = grid.problem.clone();
            (Some((spec, grid)), problem, "pde_laplace_rect")
        }
        ProblemSpec::Explicit(mut problem) => {
            if a.dx.is_some() || a.dy.is_some() || a.noise != 0.0 {
                return Err(CliError::Usage("--dx, --dy and --noise apply only to built-in problems".to_string()));
            }
            if let Some(k) = override_kernel {
                problem.kernel = k;
            }
            (None, problem, "pde")
        }
    };

    let (net, rep) = pde::solve_pde(&problem, &cfg)?;
    let residual = pde_residual(&net, &problem)?;
    let zeros = vec![0.0; residual.len()];
    let mut config = json!({
        "problem": a.problem.display().to_string(),
        "kernel": problem.kernel.kind,
        "c": problem.kernel.c,
        "neurons": rep.neurons,
        "mode": a.mode.to_string(),
        "boundary_weight": a.boundary_weight,
        "interior_rows": rep.interior_rows,
        "boundary_rows": rep.boundary_rows,
    });
    let mut report = RunReport {
        experiment: experiment.to_string(),
        config: json!(null),
        train_mae: mae(&residual, &zeros)?,
        test_mae: f64::NAN,
        accuracy_per_class: None,
        timings: rep.timings,
        seed: a.seed,
        metrics: Default::default(),
    };
    let mut boundary_err = Vec::new();
    for b in &problem.boundary {
        let got = match b.condition {
            annbn_core::BoundaryCondition::Value => net.predict(&b.points)?,
            annbn_core::BoundaryCondition::Derivative { order, dim } => net.predict_derivative(&b.points, order, dim)?,
        };
        boundary_err.extend(got.iter().zip(&b.values).map(|(g, v)| (g - v).abs()));
    }
    if !boundary_err.is_empty() {
        report.metrics.insert("boundary_mae".into(), boundary_err.iter().sum::<f64>() / boundary_err.len() as f64);
    }
    if let Some((spec, grid)) = &grid {
        let e = benchmarks::laplace_errors(&net, grid)?;
        report.test_mae = e.solution_mae;
        report.metrics.insert("solution_mae".into(), e.solution_mae);
        report.metrics.insert("laplacian_mae".into(), e.laplacian_mae);
        report.metrics.insert("residual_mae".into(), e.residual_mae);
        config["laplace"] = json!(spec);
    }
    report.config = config;
    if let Some(out) = &a.out {
        ModelFile::new(Model::Rbf(net)).save(out)?;
    }
    emit(&[report], a.report.as_deref())
}

fn bench(a: &BenchArgs) -> CliResult<()> {
    let mnist_dir = a.mnist_dir.clone().or_else(|| std::env::var_os("ANNBN_MNIST_DIR").map(PathBuf::from));
    if a.suite == "mnist" && mnist_dir.is_none() {
        return Err(CliError::Usage("the mnist suite needs --mnist-dir or ANNBN_MNIST_DIR".to_string()));
    }
    let opts = SuiteOptions { seed: a.seed, mnist_dir, digits: a.digits.clone(), subset: a.subset, neurons: a.neurons };
    let reports = benchmarks::run_suite(&a.suite, &opts)?;
    emit(&reports, None)?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
        let lines: String = reports.iter().map(|r| r.to_json_line() + "\n").collect();
        write_file(&dir.join("reports.jsonl"), &lines)?;
        write_file(&dir.join("summary.txt"), &benchmarks::summary_table(&reports))?;
    }
    Ok(())
}
