//! Encoding of the per-set bound problem as a MILP.
//!
//! The model maximizes `beta` subject to: a shared input `x in [0,1]^d`
//! wired into a concrete network and a hyper-network copy; exact big-M ReLU
//! rows for the concrete copy and for hyper neurons whose difference
//! interval is wide; triangle-relaxation rows instead of binaries for hyper
//! neurons whose difference interval is narrow (width <= tau); matching
//! dependencies `z + dl <= z# <= z + du` tying the copies together; the
//! confidence rows `z_{L,c} - z_{L,c'} >= beta` on the concrete copy; and a
//! big-M disjunction forcing the hyper copy to not classify as `c`.
//!
//! Stable ReLUs (pre-activation sign fixed by the bounds) are encoded
//! linearly and contribute no binary.

#![allow(clippy::needless_range_loop)] // index loops mirror the layer/neuron subscripts

use crate::hyper::{DifferenceIntervals, Interval, IntervalNetwork, PreActivationBounds};
use crate::nn::Network;

use super::model::{MilpModel, RelOp, VarId};
use super::MilpError;

/// Encoder knobs. `tau` is the relax-if-similar threshold on the width of a
/// neuron's difference interval; `big_m_margin` pads the disjunction
/// constant derived from the output bounds.
#[derive(Debug, Clone)]
pub struct EncodeOptions {
    pub tau: f64,
    pub big_m_margin: f64,
    /// Emit the matching-dependency rows. On by default; the off switch
    /// exists for ablation.
    pub matching_dependencies: bool,
    /// Apply the triangle relaxation to narrow-difference hyper neurons.
    /// Off gives the fully exact encoding regardless of `tau`; note that a
    /// zero-width difference interval qualifies for relaxation even at
    /// `tau = 0` (it is lossless there as long as the matching dependencies
    /// are kept).
    pub relax_if_similar: bool,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self {
            tau: 0.01,
            big_m_margin: 1.0,
            matching_dependencies: true,
            relax_if_similar: true,
        }
    }
}

/// How each ReLU neuron ended up encoded.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EncodeStats {
    /// Binaries total: unstable concrete ReLUs + precise hyper ReLUs + the
    /// disjunction binaries.
    pub binaries: usize,
    pub relaxed_hyper_neurons: usize,
    pub stable_net_neurons: usize,
    pub stable_hyper_neurons: usize,
}

/// The encoded model plus the handle of the objective variable.
#[derive(Debug, Clone)]
pub struct EncodedProblem {
    pub model: MilpModel,
    pub beta: VarId,
    pub stats: EncodeStats,
}

struct CopyVars {
    /// Post-activation (hidden) or affine output value per layer.
    values: Vec<Vec<VarId>>,
}

pub fn encode(
    net: &Network,
    hyper: &IntervalNetwork,
    class: usize,
    net_bounds: &PreActivationBounds,
    hyper_bounds: &PreActivationBounds,
    diffs: &DifferenceIntervals,
    opts: &EncodeOptions,
) -> Result<EncodedProblem, MilpError> {
    if opts.tau < 0.0 {
        return Err(MilpError::NegativeTau(opts.tau));
    }
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
    check_bounds(net_bounds)?;
    check_bounds(hyper_bounds)?;

    let mut model = MilpModel::new();
    let mut stats = EncodeStats::default();
    let num_layers = net.architecture().num_layers();

    let x: Vec<VarId> = (0..net.input_dim())
        .map(|k| model.add_var(format!("x{k}"), 0.0, 1.0))
        .collect();

    let net_vars = encode_network_copy(&mut model, &mut stats, net, net_bounds, &x);
    let hyper_vars = encode_hyper_copy(&mut model, &mut stats, hyper, hyper_bounds, diffs, opts, &x);

    if opts.matching_dependencies {
        for m in 1..=num_layers {
            let post = diffs.post(m);
            for k in 0..post.len() {
                let d = post[k];
                model.add_constraint(
                    format!("md_lo_{m}_{k}"),
                    vec![(hyper_vars.values[m - 1][k], 1.0), (net_vars.values[m - 1][k], -1.0)],
                    RelOp::Ge,
                    d.lo,
                );
                model.add_constraint(
                    format!("md_hi_{m}_{k}"),
                    vec![(hyper_vars.values[m - 1][k], 1.0), (net_vars.values[m - 1][k], -1.0)],
                    RelOp::Le,
                    d.hi,
                );
            }
        }
    }

    // Confidence of the concrete copy: z_{L,c} - z_{L,c'} >= beta for all
    // c' != c, with beta bounded by the output-layer bounds.
    let out_net = net_bounds.pre(num_layers);
    let mut beta_lo = f64::INFINITY;
    let mut beta_hi = f64::INFINITY;
    for c2 in 0..num_classes {
        if c2 == class {
            continue;
        }
        beta_lo = beta_lo.min(out_net[class].lo - out_net[c2].hi);
        beta_hi = beta_hi.min(out_net[class].hi - out_net[c2].lo);
    }
    let beta = model.add_var("beta", beta_lo - 1.0, beta_hi + 1.0);
    model.maximize(beta);
    let out_values = &net_vars.values[num_layers - 1];
    for c2 in 0..num_classes {
        if c2 == class {
            continue;
        }
        model.add_constraint(
            format!("conf_{c2}"),
            vec![(out_values[class], 1.0), (out_values[c2], -1.0), (beta, -1.0)],
            RelOp::Ge,
            0.0,
        );
    }

    // Hyper copy must not classify as c: some c' has z#_{L,c} - z#_{L,c'} <= 0,
    // expressed with the big-M method.
    let out_hyper = hyper_bounds.pre(num_layers);
    let mut worst_gap: f64 = 0.0;
    for c2 in 0..num_classes {
        if c2 == class {
            continue;
        }
        worst_gap = worst_gap.max(out_hyper[class].hi - out_hyper[c2].lo);
    }
    let big_m = worst_gap + opts.big_m_margin;
    model.set_big_m(big_m);
    let hyper_out = &hyper_vars.values[num_layers - 1];
    let mut alpha_sum = Vec::new();
    for c2 in 0..num_classes {
        if c2 == class {
            continue;
        }
        let alpha = model.add_binary(format!("alpha{c2}"));
        stats.binaries += 1;
        model.add_constraint(
            format!("viol_{c2}"),
            vec![
                (hyper_out[class], 1.0),
                (hyper_out[c2], -1.0),
                (alpha, big_m),
            ],
            RelOp::Le,
            big_m,
        );
        alpha_sum.push((alpha, 1.0));
    }
    model.add_constraint("viol_any", alpha_sum, RelOp::Ge, 1.0);

    Ok(EncodedProblem { model, beta, stats })
}

fn check_bounds(bounds: &PreActivationBounds) -> Result<(), MilpError> {
    for m in 1..=bounds.num_layers() {
        for (k, i) in bounds.pre(m).iter().enumerate() {
            if i.lo > i.hi || !i.lo.is_finite() || !i.hi.is_finite() {
                return Err(MilpError::InconsistentBounds {
                    layer: m,
                    neuron: k,
                    lo: i.lo,
                    hi: i.hi,
                });
            }
        }
    }
    Ok(())
}

/// Exact encoding of the concrete copy: equality weighted sums, big-M ReLU
/// rows with one binary per unstable hidden neuron.
fn encode_network_copy(
    model: &mut MilpModel,
    stats: &mut EncodeStats,
    net: &Network,
    bounds: &PreActivationBounds,
    x: &[VarId],
) -> CopyVars {
    let num_layers = net.architecture().num_layers();
    let mut values: Vec<Vec<VarId>> = Vec::with_capacity(num_layers);
    for m in 1..=num_layers {
        let layer = &net.layers()[m - 1];
        let pre_bounds = bounds.pre(m);
        let prev: &[VarId] = if m == 1 { x } else { &values[m - 2] };
        let mut layer_values = Vec::with_capacity(layer.bias.len());
        for k in 0..layer.bias.len() {
            let Interval { lo, hi } = pre_bounds[k];
            let pre = model.add_var(format!("n_zh{m}_{k}"), lo, hi);
            let mut terms = vec![(pre, 1.0)];
            for (kp, &w) in layer.weights[k].iter().enumerate() {
                if w != 0.0 {
                    terms.push((prev[kp], -w));
                }
            }
            model.add_constraint(format!("n_sum_{m}_{k}"), terms, RelOp::Eq, layer.bias[k]);

            if m == num_layers {
                layer_values.push(pre);
                continue;
            }
            let post = model.add_var(format!("n_z{m}_{k}"), 0.0, hi.max(0.0));
            if lo >= 0.0 {
                stats.stable_net_neurons += 1;
                model.add_constraint(
                    format!("n_act_{m}_{k}"),
                    vec![(post, 1.0), (pre, -1.0)],
                    RelOp::Eq,
                    0.0,
                );
            } else if hi <= 0.0 {
                stats.stable_net_neurons += 1;
                // Post bounds are already [0, 0]; nothing else to add.
            } else {
                let a = model.add_binary(format!("a{m}_{k}"));
                stats.binaries += 1;
                model.add_constraint(
                    format!("n_relu_ge_{m}_{k}"),
                    vec![(post, 1.0), (pre, -1.0)],
                    RelOp::Ge,
                    0.0,
                );
                model.add_constraint(
                    format!("n_relu_cap_{m}_{k}"),
                    vec![(post, 1.0), (a, -hi)],
                    RelOp::Le,
                    0.0,
                );
                model.add_constraint(
                    format!("n_relu_gate_{m}_{k}"),
                    vec![(post, 1.0), (pre, -1.0), (a, -lo)],
                    RelOp::Le,
                    -lo,
                );
            }
            layer_values.push(post);
        }
        values.push(layer_values);
    }
    CopyVars { values }
}

/// Interval encoding of the hyper copy: two-sided weighted-sum inequalities,
/// and per hidden neuron either exact big-M ReLU rows or the triangle
/// relaxation when its difference interval is narrower than tau.
fn encode_hyper_copy(
    model: &mut MilpModel,
    stats: &mut EncodeStats,
    hyper: &IntervalNetwork,
    bounds: &PreActivationBounds,
    diffs: &DifferenceIntervals,
    opts: &EncodeOptions,
    x: &[VarId],
) -> CopyVars {
    let num_layers = hyper.num_layers();
    let mut values: Vec<Vec<VarId>> = Vec::with_capacity(num_layers);
    for m in 1..=num_layers {
        let layer = &hyper.layers()[m - 1];
        let pre_bounds = bounds.pre(m);
        let diff_post = diffs.post(m);
        let prev: Vec<VarId> = if m == 1 {
            x.to_vec()
        } else {
            values[m - 2].clone()
        };
        let mut layer_values = Vec::with_capacity(layer.bias.len());
        for k in 0..layer.bias.len() {
            let Interval { lo, hi } = pre_bounds[k];
            let pre = model.add_var(format!("h_zh{m}_{k}"), lo, hi);
            // Valid because the inputs of every layer are non-negative:
            // x lives in [0,1]^d and hidden outputs are post-ReLU.
            let mut lo_terms = vec![(pre, 1.0)];
            let mut hi_terms = vec![(pre, 1.0)];
            for (kp, w) in layer.weights[k].iter().enumerate() {
                if w.lo != 0.0 {
                    lo_terms.push((prev[kp], -w.lo));
                }
                if w.hi != 0.0 {
                    hi_terms.push((prev[kp], -w.hi));
                }
            }
            model.add_constraint(
                format!("h_sum_lo_{m}_{k}"),
                lo_terms,
                RelOp::Ge,
                layer.bias[k].lo,
            );
            model.add_constraint(
                format!("h_sum_hi_{m}_{k}"),
                hi_terms,
                RelOp::Le,
                layer.bias[k].hi,
            );

            if m == num_layers {
                layer_values.push(pre);
                continue;
            }
            let post = model.add_var(format!("h_z{m}_{k}"), 0.0, hi.max(0.0));
            if lo >= 0.0 {
                stats.stable_hyper_neurons += 1;
                model.add_constraint(
                    format!("h_act_{m}_{k}"),
                    vec![(post, 1.0), (pre, -1.0)],
                    RelOp::Eq,
                    0.0,
                );
            } else if hi <= 0.0 {
                stats.stable_hyper_neurons += 1;
            } else if opts.relax_if_similar && diff_post[k].width() <= opts.tau {
                // Relax-if-similar: minimal triangle over the ReLU graph,
                // no binary.
                stats.relaxed_hyper_neurons += 1;
                let slope = hi / (hi - lo);
                model.add_constraint(
                    format!("h_tri_ge_{m}_{k}"),
                    vec![(post, 1.0), (pre, -1.0)],
                    RelOp::Ge,
                    0.0,
                );
                model.add_constraint(
                    format!("h_tri_up_{m}_{k}"),
                    vec![(post, 1.0), (pre, -slope)],
                    RelOp::Le,
                    -slope * lo,
                );
            } else {
                let a = model.add_binary(format!("ah{m}_{k}"));
                stats.binaries += 1;
                model.add_constraint(
                    format!("h_relu_ge_{m}_{k}"),
                    vec![(post, 1.0), (pre, -1.0)],
                    RelOp::Ge,
                    0.0,
                );
                model.add_constraint(
                    format!("h_relu_cap_{m}_{k}"),
                    vec![(post, 1.0), (a, -hi)],
                    RelOp::Le,
                    0.0,
                );
                model.add_constraint(
                    format!("h_relu_gate_{m}_{k}"),
                    vec![(post, 1.0), (pre, -1.0), (a, -lo)],
                    RelOp::Le,
                    -lo,
                );
            }
            layer_values.push(post);
        }
        values.push(layer_values);
    }
    CopyVars { values }
}
