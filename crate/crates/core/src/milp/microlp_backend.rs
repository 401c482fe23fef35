//! Pure-Rust fallback solver backed by microlp's simplex + branch & bound.

use std::time::Instant;

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolutionStatus, SolveOptions};

use super::backend::{BackendFailure, SolveLimits, SolveResult, SolveStatus, SolverBackend};
use super::model::{MilpModel, RelOp, VarKind};

pub struct MicrolpBackend;

impl SolverBackend for MicrolpBackend {
    fn name(&self) -> &str {
        "microlp"
    }

    fn solve_model(
        &self,
        model: &MilpModel,
        limits: &SolveLimits,
    ) -> Result<SolveResult, BackendFailure> {
        let started = Instant::now();
        let mut pb = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<microlp::Variable> = model
            .vars()
            .iter()
            .map(|v| match v.kind {
                VarKind::Continuous => pb.add_var(v.obj, (v.lo, v.hi)),
                VarKind::Binary => pb.add_integer_var(v.obj, (0, 1)),
            })
            .collect();
        for c in model.constraints() {
            let terms: Vec<(microlp::Variable, f64)> =
                c.terms.iter().map(|&(v, coef)| (vars[v.0], coef)).collect();
            let op = match c.op {
                RelOp::Le => ComparisonOp::Le,
                RelOp::Ge => ComparisonOp::Ge,
                RelOp::Eq => ComparisonOp::Eq,
            };
            pb.add_constraint(terms, op, c.rhs);
        }

        let mut options = SolveOptions::default();
        options.time_limit = limits.time_limit;
        // microlp only supports a relative gap; 0 proves exact optimality,
        // which is stricter than any absolute gap.
        options.mip_gap = limits.rel_gap.unwrap_or(0.0);
        options.tolerances.feasibility = limits.feasibility_tol;

        let outcome = match pb.solve_with(options) {
            Ok(outcome) => outcome,
            Err(microlp::Error::Infeasible) => {
                return Ok(SolveResult {
                    status: SolveStatus::Infeasible,
                    incumbent: None,
                    dual_bound: None,
                    solve_time: started.elapsed(),
                })
            }
            Err(other) => return Err(BackendFailure::new(format!("microlp: {other:?}"))),
        };

        let elapsed = started.elapsed();
        let best_bound = outcome.stats().best_bound;
        match outcome.solution() {
            Some(sol) => {
                let obj = sol.objective();
                if sol.status() == SolutionStatus::Optimal {
                    Ok(SolveResult {
                        status: SolveStatus::Optimal,
                        incumbent: Some(obj),
                        dual_bound: Some(best_bound.unwrap_or(obj).max(obj)),
                        solve_time: elapsed,
                    })
                } else {
                    Ok(SolveResult {
                        status: SolveStatus::TimeLimit,
                        incumbent: Some(obj),
                        dual_bound: best_bound,
                        solve_time: elapsed,
                    })
                }
            }
            None => Ok(SolveResult {
                status: SolveStatus::TimeLimit,
                incumbent: None,
                dual_bound: best_bound,
                solve_time: elapsed,
            }),
        }
    }
}
