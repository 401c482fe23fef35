//! The pluggable solver interface: continuous + binary variables, linear
//! constraints, maximize, per-call time limit, gap tolerances, deterministic
//! mode.

use std::time::Duration;

use super::model::MilpModel;
use super::MilpError;

/// Per-solve limits and tolerances.
#[derive(Debug, Clone)]
pub struct SolveLimits {
    pub time_limit: Option<Duration>,
    /// Absolute MIP gap required to report `Optimal`.
    pub abs_gap: f64,
    /// Optional relative MIP gap.
    pub rel_gap: Option<f64>,
    pub feasibility_tol: f64,
    /// Pin solver threads and seeds so repeated solves are bit-identical.
    pub deterministic: bool,
}

impl Default for SolveLimits {
    fn default() -> Self {
        Self {
            time_limit: None,
            abs_gap: 1e-6,
            rel_gap: None,
            feasibility_tol: 1e-7,
            deterministic: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    TimeLimit,
}

/// Outcome of one solve. `Optimal` carries the incumbent within the gap
/// tolerance; `TimeLimit` carries whatever the solver proved so far, with
/// `dual_bound` a sound overapproximation of the true optimum.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub incumbent: Option<f64>,
    pub dual_bound: Option<f64>,
    pub solve_time: Duration,
}

/// Raised by a backend; converted to [`MilpError::Backend`] with model
/// statistics attached by [`super::solve`].
#[derive(Debug, Clone)]
pub struct BackendFailure {
    pub message: String,
}

impl BackendFailure {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

pub trait SolverBackend: Send + Sync {
    fn name(&self) -> &str;
    fn solve_model(&self, model: &MilpModel, limits: &SolveLimits)
        -> Result<SolveResult, BackendFailure>;
}

/// Look up a backend by its configuration name.
pub fn backend_by_name(name: &str) -> Result<Box<dyn SolverBackend>, MilpError> {
    match name {
        "highs" => Ok(Box::new(super::highs_backend::HighsBackend)),
        "microlp" => Ok(Box::new(super::microlp_backend::MicrolpBackend)),
        other => Err(MilpError::UnknownBackend(other.to_string())),
    }
}

/// Names accepted by [`backend_by_name`].
pub const BACKEND_NAMES: &[&str] = &["highs", "microlp"];
