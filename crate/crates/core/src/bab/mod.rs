//! Branch-and-bound over hyper-networks.
//!
//! The loop analyzes every pending subset (build the hyper-network, compute
//! difference intervals, encode, solve), pushes each `(subset, bound)` pair
//! onto a max-priority queue, then pops the maximal pair. A popped
//! singleton bounds every queued problem, so its bound is final; a popped
//! non-singleton is partitioned by parameter-space clustering and its
//! clusters are re-analyzed. The bound of the most recent pop is a sound
//! anytime overapproximation throughout.

pub mod cluster;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hyper::{
    build_hyper, compute_difference_intervals, propagate_bounds, propagate_bounds_network,
    HyperError,
};
use crate::milp::{
    encode, result_to_bound, solve, ClassBound, EncodeOptions, MilpError, SolveLimits,
    SolveStatus, SolverBackend,
};
use crate::nn::Network;
use crate::trainer::LooFamily;

pub use cluster::{partition, ClusterConfig};

#[derive(Debug, Error)]
pub enum BabError {
    #[error("class index {got} out of range, have {num_classes} classes")]
    InvalidClass { got: usize, num_classes: usize },
    #[error("family has no leave-one-out members")]
    EmptyFamily,
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Hyper(#[from] HyperError),
    /// A solver failure aborts the run; the partial trace and the last
    /// anytime bound survive in `partial`.
    #[error("solver failure: {source}")]
    Solver {
        source: MilpError,
        partial: Box<BoundResult>,
    },
}

/// Knobs of the bound computation. Defaults follow the reference setup:
/// tau 0.01, 40 minutes per MILP, 8 hours total; the worker pool is sized
/// for a desktop run.
#[derive(Debug, Clone)]
pub struct BabConfig {
    pub tau: f64,
    pub matching_dependencies: bool,
    pub per_milp_time_limit: Option<Duration>,
    pub total_time_limit: Option<Duration>,
    pub workers: usize,
    /// Serialize queue decisions and zero out trace timings so repeated
    /// runs produce byte-identical results.
    pub deterministic: bool,
    pub seed: u64,
    pub cluster: ClusterConfig,
    pub abs_gap: f64,
    pub feasibility_tol: f64,
}

impl Default for BabConfig {
    fn default() -> Self {
        Self {
            tau: 0.01,
            matching_dependencies: true,
            per_milp_time_limit: Some(Duration::from_secs(40 * 60)),
            total_time_limit: Some(Duration::from_secs(8 * 60 * 60)),
            workers: 4,
            deterministic: false,
            seed: 0,
            cluster: ClusterConfig::default(),
            abs_gap: 1e-6,
            feasibility_tol: 1e-7,
        }
    }
}

/// One solved subset, in solve order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntry {
    pub subset_size: usize,
    pub bound: ClassBound,
    pub status: SolveStatus,
    pub time_ms: f64,
}

/// The computed per-class bound plus provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundResult {
    pub class: usize,
    pub beta: ClassBound,
    /// False when the final bound came from a time-limited solve (it is
    /// then a sound overapproximation) or when the total budget expired.
    pub exact: bool,
    pub timed_out: bool,
    pub milp_count: usize,
    pub trace: Vec<TraceEntry>,
    /// Anytime bound after each pop, in pop order.
    pub pops: Vec<ClassBound>,
    /// Bounds still queued when the run terminated.
    pub remaining: Vec<ClassBound>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Task {
    bound: ClassBound,
    subset: Vec<usize>,
    exact: bool,
    status: SolveStatus,
}

impl Ord for Task {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max bound first; singletons win ties, then lexicographically
        // smaller subsets, keeping pops deterministic.
        self.bound
            .cmp(&other.bound)
            .then_with(|| other.subset.len().cmp(&self.subset.len()))
            .then_with(|| other.subset.cmp(&self.subset))
    }
}

impl PartialOrd for Task {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Event passed to the progress callback at each pop.
#[derive(Debug, Clone)]
pub struct PopEvent {
    pub subset_size: usize,
    pub anytime: ClassBound,
    pub milp_count: usize,
}

pub fn compute_bound(
    family: &LooFamily,
    class: usize,
    config: &BabConfig,
    backend: &dyn SolverBackend,
) -> Result<BoundResult, BabError> {
    compute_bound_with_progress(family, class, config, backend, |_| {})
}

pub fn compute_bound_with_progress(
    family: &LooFamily,
    class: usize,
    config: &BabConfig,
    backend: &dyn SolverBackend,
    mut on_pop: impl FnMut(&PopEvent),
) -> Result<BoundResult, BabError> {
    let net = &family.full;
    let num_classes = net.num_classes();
    if class >= num_classes {
        return Err(BabError::InvalidClass {
            got: class,
            num_classes,
        });
    }
    if family.is_empty() {
        return Err(BabError::EmptyFamily);
    }

    let net_bounds = propagate_bounds_network(net);
    let encode_opts = EncodeOptions {
        tau: config.tau,
        matching_dependencies: config.matching_dependencies,
        ..EncodeOptions::default()
    };
    let limits = SolveLimits {
        time_limit: config.per_milp_time_limit,
        abs_gap: config.abs_gap,
        rel_gap: None,
        feasibility_tol: config.feasibility_tol,
        deterministic: config.deterministic,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| BabError::Pool(e.to_string()))?;

    let deadline = config.total_time_limit.map(|d| Instant::now() + d);
    let mut queue: BinaryHeap<Task> = BinaryHeap::new();
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut pops: Vec<ClassBound> = Vec::new();
    let mut milp_count = 0usize;
    let mut pending: Vec<Vec<usize>> = vec![family.members().map(|(i, _)| i).collect()];

    let analyze = |subset: &Vec<usize>| -> Result<Task, MilpError> {
        let nets: Vec<&Network> = subset.iter().map(|i| &family.omitted[i]).collect();
        let hyper = build_hyper(&nets).map_err(|_| MilpError::PairMismatch)?;
        let hyper_bounds = propagate_bounds(&hyper);
        let diffs = compute_difference_intervals(net, &hyper, &net_bounds)
            .map_err(|_| MilpError::PairMismatch)?;
        let problem = encode(
            net,
            &hyper,
            class,
            &net_bounds,
            &hyper_bounds,
            &diffs,
            &encode_opts,
        )?;
        let res = solve(&problem.model, backend, &limits)?;
        Ok(Task {
            bound: result_to_bound(&res),
            subset: subset.clone(),
            exact: res.status != SolveStatus::TimeLimit,
            status: res.status,
        })
    };

    loop {
        let batch_start = Instant::now();
        let results: Result<Vec<(Task, f64)>, MilpError> = pool.install(|| {
            pending
                .par_iter()
                .map(|subset| {
                    let t0 = Instant::now();
                    analyze(subset).map(|task| (task, t0.elapsed().as_secs_f64() * 1e3))
                })
                .collect()
        });
        let _ = batch_start;
        let results = match results {
            Ok(r) => r,
            Err(source) => {
                let partial = finish(
                    class,
                    last_anytime(&pops),
                    false,
                    false,
                    milp_count,
                    trace,
                    pops,
                    &queue,
                );
                return Err(BabError::Solver {
                    source,
                    partial: Box::new(partial),
                });
            }
        };
        for (task, ms) in results {
            milp_count += 1;
            trace.push(TraceEntry {
                subset_size: task.subset.len(),
                bound: task.bound,
                status: task.status,
                time_ms: if config.deterministic { 0.0 } else { ms },
            });
            queue.push(task);
        }

        let popped = queue.pop().expect("queue holds the just-analyzed subsets");
        pops.push(popped.bound);
        on_pop(&PopEvent {
            subset_size: popped.subset.len(),
            anytime: popped.bound,
            milp_count,
        });

        if popped.subset.len() == 1 {
            return Ok(finish(
                class,
                popped.bound,
                popped.exact,
                false,
                milp_count,
                trace,
                pops,
                &queue,
            ));
        }
        // The popped bound is the queue maximum; if it is the infeasible
        // sentinel, every remaining problem is infeasible too and there is
        // nothing to branch.
        if popped.bound.is_no_leaking() {
            return Ok(finish(
                class,
                ClassBound::NoLeakingInputs,
                popped.exact,
                false,
                milp_count,
                trace,
                pops,
                &queue,
            ));
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return Ok(finish(
                class,
                popped.bound,
                false,
                true,
                milp_count,
                trace,
                pops,
                &queue,
            ));
        }

        let members: Vec<(usize, &Network)> = popped
            .subset
            .iter()
            .map(|&i| (i, &family.omitted[&i]))
            .collect();
        let mut cluster_cfg = config.cluster.clone();
        cluster_cfg.seed = config.seed;
        pending = partition(&members, &cluster_cfg);
    }
}

fn last_anytime(pops: &[ClassBound]) -> ClassBound {
    pops.last()
        .copied()
        .unwrap_or(ClassBound::Finite(f64::INFINITY))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    class: usize,
    beta: ClassBound,
    exact: bool,
    timed_out: bool,
    milp_count: usize,
    trace: Vec<TraceEntry>,
    pops: Vec<ClassBound>,
    queue: &BinaryHeap<Task>,
) -> BoundResult {
    BoundResult {
        class,
        beta,
        exact: exact && !timed_out,
        timed_out,
        milp_count,
        trace,
        pops,
        remaining: queue.iter().map(|t| t.bound).collect(),
    }
}

/// The naive decomposition: one exact MILP per leave-one-out member, then
/// the maximum. Exponential in nothing but member count; used as the
/// equivalence oracle for the branch-and-bound.
pub fn naive_per_point_bound(
    family: &LooFamily,
    class: usize,
    config: &BabConfig,
    backend: &dyn SolverBackend,
) -> Result<ClassBound, BabError> {
    let net = &family.full;
    let net_bounds = propagate_bounds_network(net);
    let encode_opts = EncodeOptions {
        tau: 0.0,
        matching_dependencies: config.matching_dependencies,
        ..EncodeOptions::default()
    };
    let limits = SolveLimits {
        time_limit: config.per_milp_time_limit,
        abs_gap: config.abs_gap,
        rel_gap: None,
        feasibility_tol: config.feasibility_tol,
        deterministic: config.deterministic,
    };
    let mut best = ClassBound::NoLeakingInputs;
    for (_, member) in family.members() {
        let hyper = build_hyper(&[member])?;
        let hyper_bounds = propagate_bounds(&hyper);
        let diffs = compute_difference_intervals(net, &hyper, &net_bounds)?;
        let problem = encode(
            net,
            &hyper,
            class,
            &net_bounds,
            &hyper_bounds,
            &diffs,
            &encode_opts,
        )
        .map_err(|source| BabError::Solver {
            source,
            partial: Box::new(empty_result(class)),
        })?;
        let res = solve(&problem.model, backend, &limits).map_err(|source| BabError::Solver {
            source,
            partial: Box::new(empty_result(class)),
        })?;
        let bound = result_to_bound(&res);
        if bound > best {
            best = bound;
        }
    }
    Ok(best)
}

fn empty_result(class: usize) -> BoundResult {
    BoundResult {
        class,
        beta: ClassBound::Finite(f64::INFINITY),
        exact: false,
        timed_out: false,
        milp_count: 0,
        trace: Vec::new(),
        pops: Vec::new(),
        remaining: Vec::new(),
    }
}

#[cfg(test)]
mod tests;
