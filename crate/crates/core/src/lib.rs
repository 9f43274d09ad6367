//! Neural networks and meshless PDE solvers trained without gradient descent.
//!
//! Observations are split into neighborhoods, each neighborhood fixes one
//! hidden neuron by a small exact solve, and the output layer is a single
//! linear least-squares problem. Sigmoid and radial-basis networks share that
//! pipeline; the radial-basis variant also solves linear PDEs by collocation.

pub mod activation;
pub mod benchmarks;
pub mod clustering;
pub mod dataset;
pub mod deep;
pub mod ensemble;
pub mod error;
pub mod matrix;
pub mod numerics;
pub mod pde;
pub mod persist;
pub mod rbf_net;
pub mod report;
pub mod rng;
pub mod sigmoid_net;

pub use activation::{ActivationKind, Sigmoid};
pub use benchmarks::RunReport;
pub use clustering::{Assignment, ClusterMode};
pub use dataset::{Dataset, FeatureTransform, NormParams};
pub use deep::{DeepConfig, DeepNet};
pub use ensemble::{BaseConfig, Ensemble, Member};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use numerics::{SolveMethod, SolveReport};
pub use pde::{BoundaryCondition, BoundarySet, Coefficient, OperatorTerm, PdeConfig, PdeProblem, PdeReport};
pub use persist::{Model, ModelFile};
pub use rbf_net::{Kernel, KernelKind, RbfConfig, RbfNet};
pub use report::{FitReport, PhaseTimings};
pub use rng::SeededRng;
pub use sigmoid_net::{Classifier, SigmoidConfig, SigmoidNet};

/// Environment variable capping worker threads; `0` or unset means one per core.
pub const THREADS_ENV: &str = "ANNBN_THREADS";

/// Reads [`THREADS_ENV`]. Returns `Ok(0)` when unset.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV} must be a non-negative integer, got `{s}`"))),
    }
}

/// Sizes the global thread pool used by both the fitting code and faer.
/// Has no effect on the pool if it was already built.
pub fn configure_threads(threads: usize) {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    let par = if threads == 1 { faer::Par::Seq } else { faer::Par::rayon(threads) };
    faer::set_global_parallelism(par);
}
