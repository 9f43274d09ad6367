use std::time::Instant;

use serde::Serialize;

use crate::numerics::SolveReport;

/// Wall-clock seconds spent in each fitting phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PhaseTimings {
    pub cluster: f64,
    pub local_solve: f64,
    pub output_solve: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.cluster + self.local_solve + self.output_solve
    }
}

/// Diagnostics returned next to every fitted network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub neurons: usize,
    /// Training predictions in original response units.
    pub train_predictions: Vec<f64>,
    pub train_mae: f64,
    /// Local systems that were square but had to fall back to the pseudo-inverse.
    pub local_fallbacks: usize,
    pub output_solve: SolveReport,
    pub timings: PhaseTimings,
    pub warnings: Vec<String>,
}

pub(crate) fn seconds_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}
