//! MILP encoding and solving of the per-set bound problem.
//!
//! [`encode`] builds the two-copy model for a concrete network and a
//! hyper-network, [`solve`] runs it through a pluggable [`SolverBackend`],
//! and [`exact_oracle`] cross-checks small instances by activation-pattern
//! enumeration. An infeasible bound problem means no input can flip under
//! the abstracted retrainings; that outcome is the
//! [`ClassBound::NoLeakingInputs`] sentinel, which orders below every
//! finite bound.

mod backend;
mod encode;
pub mod highs_backend;
pub mod microlp_backend;
mod model;
mod oracle;

use std::cmp::Ordering;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use backend::{
    backend_by_name, BackendFailure, SolveLimits, SolveResult, SolveStatus, SolverBackend,
    BACKEND_NAMES,
};
pub use encode::{encode, EncodeOptions, EncodeStats, EncodedProblem};
pub use model::{Constraint, MilpModel, RelOp, VarDef, VarId, VarKind};
pub use oracle::{exact_oracle, ORACLE_MAX_RELUS};

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("relax-if-similar threshold tau must be >= 0, got {0}")]
    NegativeTau(f64),
    #[error("pre-activation bound of layer {layer} neuron {neuron} is inconsistent: [{lo}, {hi}]")]
    InconsistentBounds {
        layer: usize,
        neuron: usize,
        lo: f64,
        hi: f64,
    },
    #[error("network and hyper-network architectures do not match")]
    PairMismatch,
    #[error("class index {got} out of range, have {num_classes} classes")]
    ClassOutOfRange { got: usize, num_classes: usize },
    #[error("unknown solver backend '{0}', expected one of: highs, microlp")]
    UnknownBackend(String),
    #[error("{backend} failed: {message} (model: {vars} vars, {constraints} rows, {binaries} binaries)")]
    Backend {
        backend: String,
        message: String,
        vars: usize,
        constraints: usize,
        binaries: usize,
    },
    #[error("instance has {relus} ReLUs across both copies, oracle cap is {max}")]
    InstanceTooLarge { relus: usize, max: usize },
}

/// A per-class bound value: either a finite confidence level or the
/// sentinel for "the bound problem is infeasible, no input can leak".
///
/// `NoLeakingInputs` orders below every finite value, so it contributes
/// nothing to maxima and marks classes that never need noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassBound {
    NoLeakingInputs,
    Finite(f64),
}

impl ClassBound {
    pub fn is_no_leaking(self) -> bool {
        matches!(self, ClassBound::NoLeakingInputs)
    }

    pub fn as_finite(self) -> Option<f64> {
        match self {
            ClassBound::Finite(v) => Some(v),
            ClassBound::NoLeakingInputs => None,
        }
    }
}

impl Eq for ClassBound {}

impl PartialOrd for ClassBound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ClassBound {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ClassBound::NoLeakingInputs, ClassBound::NoLeakingInputs) => Ordering::Equal,
            (ClassBound::NoLeakingInputs, ClassBound::Finite(_)) => Ordering::Less,
            (ClassBound::Finite(_), ClassBound::NoLeakingInputs) => Ordering::Greater,
            (ClassBound::Finite(a), ClassBound::Finite(b)) => a.total_cmp(b),
        }
    }
}

impl Serialize for ClassBound {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ClassBound::NoLeakingInputs => serializer.serialize_str("no_leaking_inputs"),
            ClassBound::Finite(v) if v.is_infinite() => serializer.serialize_str("infinite"),
            ClassBound::Finite(v) => serializer.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for ClassBound {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Ok(ClassBound::Finite(v)),
            Raw::Text(s) if s == "no_leaking_inputs" => Ok(ClassBound::NoLeakingInputs),
            Raw::Text(s) if s == "infinite" => Ok(ClassBound::Finite(f64::INFINITY)),
            Raw::Text(s) => Err(D::Error::custom(format!("invalid bound value '{s}'"))),
        }
    }
}

/// Solve through a backend, attaching model statistics to any failure.
pub fn solve(
    model: &MilpModel,
    backend: &dyn SolverBackend,
    limits: &SolveLimits,
) -> Result<SolveResult, MilpError> {
    backend
        .solve_model(model, limits)
        .map_err(|failure| MilpError::Backend {
            backend: backend.name().to_string(),
            message: failure.message,
            vars: model.num_vars(),
            constraints: model.num_constraints(),
            binaries: model.binary_count(),
        })
}

/// Interpret a solve outcome as a bound value. Time-limited solves fall
/// back to the proven dual bound (a sound overapproximation); a missing
/// dual bound becomes positive infinity.
pub fn result_to_bound(result: &SolveResult) -> ClassBound {
    match result.status {
        SolveStatus::Optimal => {
            ClassBound::Finite(result.incumbent.expect("optimal solve has an incumbent"))
        }
        SolveStatus::Infeasible => ClassBound::NoLeakingInputs,
        SolveStatus::TimeLimit => {
            ClassBound::Finite(result.dual_bound.unwrap_or(f64::INFINITY))
        }
    }
}

#[cfg(test)]
mod tests;
