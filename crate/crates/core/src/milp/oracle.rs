//! Exhaustive activation-pattern oracle, used only by tests.
//!
//! Enumerates every ReLU phase assignment of both copies (and every choice
//! of violated class on the hyper side), solves the resulting pure LP, and
//! returns the maximum. Exponential in the number of unstable neurons;
//! instances are capped at [`ORACLE_MAX_RELUS`] total hidden neurons. The
//! LPs are built independently of the big-M encoder so the two paths can
//! check each other.

use crate::hyper::{Interval, IntervalNetwork, PreActivationBounds};
use crate::nn::Network;

use super::backend::{SolveLimits, SolveStatus, SolverBackend};
use super::model::{MilpModel, RelOp, VarId};
use super::{ClassBound, MilpError};

pub const ORACLE_MAX_RELUS: usize = 16;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Active,
    Inactive,
}

pub fn exact_oracle(
    net: &Network,
    hyper: &IntervalNetwork,
    class: usize,
    net_bounds: &PreActivationBounds,
    hyper_bounds: &PreActivationBounds,
    backend: &dyn SolverBackend,
) -> Result<ClassBound, MilpError> {
    if !hyper.matches(net) {
        return Err(MilpError::PairMismatch);
    }
    let num_classes = net.num_classes();
    if class >= num_classes {
        return Err(MilpError::ClassOutOfRange {
            got: class,
            num_classes,
        });
    }
    let num_layers = net.architecture().num_layers();
    let hidden_count: usize = net.architecture().layer_sizes()[1..num_layers].iter().sum();
    let total_relus = 2 * hidden_count;
    if total_relus > ORACLE_MAX_RELUS {
        return Err(MilpError::InstanceTooLarge {
            relus: total_relus,
            max: ORACLE_MAX_RELUS,
        });
    }

    // Neurons whose phase the bounds do not already fix.
    let mut free: Vec<(bool, usize, usize)> = Vec::new(); // (is_hyper, layer, neuron)
    for m in 1..num_layers {
        for (k, b) in net_bounds.pre(m).iter().enumerate() {
            if b.lo < 0.0 && b.hi > 0.0 {
                free.push((false, m, k));
            }
        }
        for (k, b) in hyper_bounds.pre(m).iter().enumerate() {
            if b.lo < 0.0 && b.hi > 0.0 {
                free.push((true, m, k));
            }
        }
    }

    let limits = SolveLimits::default();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1u32 << free.len()) {
        let phase_of = |is_hyper: bool, m: usize, k: usize, bound: Interval| -> Phase {
            if bound.lo >= 0.0 {
                return Phase::Active;
            }
            if bound.hi <= 0.0 {
                return Phase::Inactive;
            }
            let idx = free
                .iter()
                .position(|&f| f == (is_hyper, m, k))
                .expect("unstable neuron is registered");
            if mask & (1 << idx) != 0 {
                Phase::Active
            } else {
                Phase::Inactive
            }
        };
        for violated in (0..num_classes).filter(|&c2| c2 != class) {
            let model = build_pattern_lp(net, hyper, class, violated, net_bounds, hyper_bounds, &phase_of);
            let res = super::solve(&model, backend, &limits)?;
            match res.status {
                SolveStatus::Optimal => {
                    let v = res.incumbent.expect("optimal LP has an objective value");
                    best = Some(best.map_or(v, |b: f64| b.max(v)));
                }
                SolveStatus::Infeasible => {}
                SolveStatus::TimeLimit => {
                    return Err(MilpError::Backend {
                        backend: backend.name().to_string(),
                        message: "oracle LP hit a time limit".to_string(),
                        vars: model.num_vars(),
                        constraints: model.num_constraints(),
                        binaries: 0,
                    })
                }
            }
        }
    }
    Ok(best.map_or(ClassBound::NoLeakingInputs, ClassBound::Finite))
}

/// One LP: ReLUs pinned to the given phases, hyper violation on a fixed
/// class.
fn build_pattern_lp(
    net: &Network,
    hyper: &IntervalNetwork,
    class: usize,
    violated: usize,
    net_bounds: &PreActivationBounds,
    hyper_bounds: &PreActivationBounds,
    phase_of: &dyn Fn(bool, usize, usize, Interval) -> Phase,
) -> MilpModel {
    let num_layers = net.architecture().num_layers();
    let num_classes = net.num_classes();
    let mut model = MilpModel::new();
    let x: Vec<VarId> = (0..net.input_dim())
        .map(|k| model.add_var(format!("x{k}"), 0.0, 1.0))
        .collect();

    // Concrete copy.
    let mut prev = x.clone();
    let mut net_out = Vec::new();
    for m in 1..=num_layers {
        let layer = &net.layers()[m - 1];
        let mut next = Vec::with_capacity(layer.bias.len());
        for k in 0..layer.bias.len() {
            let b = net_bounds.pre(m)[k];
            let pre = model.add_var(format!("p{m}_{k}"), b.lo, b.hi);
            let mut terms = vec![(pre, 1.0)];
            for (kp, &w) in layer.weights[k].iter().enumerate() {
                terms.push((prev[kp], -w));
            }
            model.add_constraint(format!("sum{m}_{k}"), terms, RelOp::Eq, layer.bias[k]);
            if m == num_layers {
                next.push(pre);
                continue;
            }
            let post = model.add_var(format!("q{m}_{k}"), 0.0, b.hi.max(0.0));
            match phase_of(false, m, k, b) {
                Phase::Active => {
                    model.add_constraint(
                        format!("act{m}_{k}"),
                        vec![(post, 1.0), (pre, -1.0)],
                        RelOp::Eq,
                        0.0,
                    );
                    model.add_constraint(format!("sgn{m}_{k}"), vec![(pre, 1.0)], RelOp::Ge, 0.0);
                }
                Phase::Inactive => {
                    model.add_constraint(format!("off{m}_{k}"), vec![(post, 1.0)], RelOp::Eq, 0.0);
                    model.add_constraint(format!("sgn{m}_{k}"), vec![(pre, 1.0)], RelOp::Le, 0.0);
                }
            }
            next.push(post);
        }
        if m == num_layers {
            net_out = next.clone();
        }
        prev = next;
    }

    // Hyper copy.
    let mut prev = x.clone();
    let mut hyper_out = Vec::new();
    for m in 1..=num_layers {
        let layer = &hyper.layers()[m - 1];
        let mut next = Vec::with_capacity(layer.bias.len());
        for k in 0..layer.bias.len() {
            let b = hyper_bounds.pre(m)[k];
            let pre = model.add_var(format!("hp{m}_{k}"), b.lo, b.hi);
            let mut lo_terms = vec![(pre, 1.0)];
            let mut hi_terms = vec![(pre, 1.0)];
            for (kp, w) in layer.weights[k].iter().enumerate() {
                lo_terms.push((prev[kp], -w.lo));
                hi_terms.push((prev[kp], -w.hi));
            }
            model.add_constraint(format!("hlo{m}_{k}"), lo_terms, RelOp::Ge, layer.bias[k].lo);
            model.add_constraint(format!("hhi{m}_{k}"), hi_terms, RelOp::Le, layer.bias[k].hi);
            if m == num_layers {
                next.push(pre);
                continue;
            }
            let post = model.add_var(format!("hq{m}_{k}"), 0.0, b.hi.max(0.0));
            match phase_of(true, m, k, b) {
                Phase::Active => {
                    model.add_constraint(
                        format!("hact{m}_{k}"),
                        vec![(post, 1.0), (pre, -1.0)],
                        RelOp::Eq,
                        0.0,
                    );
                    model.add_constraint(format!("hsgn{m}_{k}"), vec![(pre, 1.0)], RelOp::Ge, 0.0);
                }
                Phase::Inactive => {
                    model.add_constraint(format!("hoff{m}_{k}"), vec![(post, 1.0)], RelOp::Eq, 0.0);
                    model.add_constraint(format!("hsgn{m}_{k}"), vec![(pre, 1.0)], RelOp::Le, 0.0);
                }
            }
            next.push(post);
        }
        if m == num_layers {
            hyper_out = next.clone();
        }
        prev = next;
    }

    let out = net_bounds.pre(num_layers);
    let mut beta_lo = f64::INFINITY;
    let mut beta_hi = f64::INFINITY;
    for c2 in 0..num_classes {
        if c2 == class {
            continue;
        }
        beta_lo = beta_lo.min(out[class].lo - out[c2].hi);
        beta_hi = beta_hi.min(out[class].hi - out[c2].lo);
    }
    let beta = model.add_var("beta", beta_lo - 1.0, beta_hi + 1.0);
    model.maximize(beta);
    for c2 in 0..num_classes {
        if c2 == class {
            continue;
        }
        model.add_constraint(
            format!("conf{c2}"),
            vec![(net_out[class], 1.0), (net_out[c2], -1.0), (beta, -1.0)],
            RelOp::Ge,
            0.0,
        );
    }
    model.add_constraint(
        "violation",
        vec![(hyper_out[class], 1.0), (hyper_out[violated], -1.0)],
        RelOp::Le,
        0.0,
    );
    model
}
