//! HiGHS-backed solver (bundled open-source MILP solver).

use std::ffi::CString;
use std::time::Instant;

use highs::{HighsModelStatus, HighsSolutionStatus, RowProblem, Sense};

use super::backend::{BackendFailure, SolveLimits, SolveResult, SolveStatus, SolverBackend};
use super::model::{MilpModel, RelOp, VarKind};

pub struct HighsBackend;

impl SolverBackend for HighsBackend {
    fn name(&self) -> &str {
        "highs"
    }

    fn solve_model(
        &self,
        model: &MilpModel,
        limits: &SolveLimits,
    ) -> Result<SolveResult, BackendFailure> {
        let started = Instant::now();
        let mut pb = RowProblem::default();
        let cols: Vec<highs::Col> = model
            .vars()
            .iter()
            .map(|v| match v.kind {
                VarKind::Continuous => pb.add_column(v.obj, v.lo..=v.hi),
                VarKind::Binary => pb.add_integer_column(v.obj, v.lo..=v.hi),
            })
            .collect();
        for c in model.constraints() {
            let row: Vec<(highs::Col, f64)> =
                c.terms.iter().map(|&(v, coef)| (cols[v.0], coef)).collect();
            match c.op {
                RelOp::Le => pb.add_row(..=c.rhs, &row),
                RelOp::Ge => pb.add_row(c.rhs.., &row),
                RelOp::Eq => pb.add_row(c.rhs..=c.rhs, &row),
            };
        }

        let is_mip = model.binary_count() > 0;
        let mut m = pb
            .try_optimise(Sense::Maximise)
            .map_err(|s| BackendFailure::new(format!("highs rejected the model: {s:?}")))?;
        m.make_quiet();
        m.set_option("mip_abs_gap", limits.abs_gap);
        if let Some(rel) = limits.rel_gap {
            m.set_option("mip_rel_gap", rel);
        } else {
            m.set_option("mip_rel_gap", 0.0);
        }
        m.set_option("primal_feasibility_tolerance", limits.feasibility_tol);
        m.set_option("random_seed", 0_i32);
        // Single-threaded keeps solves bit-identical across runs; the
        // toolkit parallelizes across solves instead.
        m.set_option("threads", 1_i32);
        m.set_option("parallel", "off");
        if let Some(tl) = limits.time_limit {
            m.set_option("time_limit", tl.as_secs_f64());
        }

        let solved = m
            .try_solve()
            .map_err(|s| BackendFailure::new(format!("highs solve failed: {s:?}")))?;
        let status = solved.status();
        let elapsed = started.elapsed();

        let dual_bound = |solved: &highs::SolvedModel| -> Option<f64> {
            if is_mip {
                let name = CString::new("mip_dual_bound").unwrap();
                solved.double_info_value(&name).ok().filter(|v| v.is_finite())
            } else {
                Some(solved.objective_value())
            }
        };

        match status {
            HighsModelStatus::Optimal => {
                let obj = solved.objective_value();
                let dual = dual_bound(&solved).unwrap_or(obj);
                Ok(SolveResult {
                    status: SolveStatus::Optimal,
                    incumbent: Some(obj),
                    // An optimal MIP's proven bound can sit marginally below
                    // the incumbent within the gap tolerance.
                    dual_bound: Some(dual.max(obj)),
                    solve_time: elapsed,
                })
            }
            // Every variable is bounded, so "unbounded or infeasible" can
            // only mean infeasible here.
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => {
                Ok(SolveResult {
                    status: SolveStatus::Infeasible,
                    incumbent: None,
                    dual_bound: None,
                    solve_time: elapsed,
                })
            }
            HighsModelStatus::ReachedTimeLimit | HighsModelStatus::ReachedIterationLimit => {
                let incumbent = (solved.primal_solution_status() == HighsSolutionStatus::Feasible)
                    .then(|| solved.objective_value());
                Ok(SolveResult {
                    status: SolveStatus::TimeLimit,
                    incumbent,
                    dual_bound: dual_bound(&solved),
                    solve_time: elapsed,
                })
            }
            other => Err(BackendFailure::new(format!(
                "highs returned unexpected status {other:?}"
            ))),
        }
    }
}
