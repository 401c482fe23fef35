//! Hyper-networks: interval abstraction of a set of same-architecture
//! networks, pre-activation bound propagation, and per-neuron difference
//! intervals between a concrete network and a hyper-network.
//!
//! A hyper-network holds one interval per parameter, spanning the minimum
//! and maximum over its member networks. Bound propagation is plain
//! interval arithmetic layer by layer; the difference intervals follow the
//! recurrence
//!
//! `I_zhat = I_b + sum_k' ( w * I_z + I_w * (z + I_z) )`
//!
//! with the concrete network's post-activation range standing in for `z`,
//! and are clipped through ReLU as `[-max(0, -lo), max(0, hi)]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Network;

#[derive(Debug, Error, PartialEq)]
pub enum HyperError {
    #[error("cannot build a hyper-network from zero members")]
    NoMembers,
    #[error("member {index} does not share the common architecture")]
    ArchitectureMismatch { index: usize },
    #[error("hyper-network does not match the network architecture")]
    PairMismatch,
}

/// A closed interval `[lo, hi]` with `lo <= hi`, both finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "interval [{lo}, {hi}] is inverted");
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub const ZERO: Interval = Interval { lo: 0.0, hi: 0.0 };

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn scale(self, k: f64) -> Interval {
        if k >= 0.0 {
            Interval::new(k * self.lo, k * self.hi)
        } else {
            Interval::new(k * self.hi, k * self.lo)
        }
    }

    /// Offset by a scalar: `[lo - v, hi - v]`.
    pub fn sub_scalar(self, v: f64) -> Interval {
        Interval::new(self.lo - v, self.hi - v)
    }

    /// Image under ReLU: `[max(0, lo), max(0, hi)]`.
    pub fn relu(self) -> Interval {
        Interval::new(self.lo.max(0.0), self.hi.max(0.0))
    }
}

impl std::ops::Add for Interval {
    type Output = Interval;

    fn add(self, other: Interval) -> Interval {
        Interval::new(self.lo + other.lo, self.hi + other.hi)
    }
}

/// Standard four-product interval multiplication.
impl std::ops::Mul for Interval {
    type Output = Interval;

    fn mul(self, other: Interval) -> Interval {
        let p = [
            self.lo * other.lo,
            self.lo * other.hi,
            self.hi * other.lo,
            self.hi * other.hi,
        ];
        Interval::new(
            p.iter().copied().fold(f64::INFINITY, f64::min),
            p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    }
}

/// One layer of interval parameters, same shapes as [`crate::nn::Layer`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalLayer {
    pub weights: Vec<Vec<Interval>>,
    pub bias: Vec<Interval>,
}

/// A network of the same architecture whose weights and biases are
/// intervals covering every member network entrywise.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalNetwork {
    layer_sizes: Vec<usize>,
    layers: Vec<IntervalLayer>,
}

impl IntervalNetwork {
    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[IntervalLayer] {
        &self.layers
    }

    #[cfg(test)]
    pub(crate) fn layers_mut(&mut self) -> &mut [IntervalLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// The degenerate hyper-network of a single concrete network: every
    /// interval is a point.
    pub fn degenerate(net: &Network) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| IntervalLayer {
                weights: l
                    .weights
                    .iter()
                    .map(|r| r.iter().map(|&w| Interval::point(w)).collect())
                    .collect(),
                bias: l.bias.iter().map(|&b| Interval::point(b)).collect(),
            })
            .collect();
        Self {
            layer_sizes: net.architecture().layer_sizes().to_vec(),
            layers,
        }
    }

    /// True when `net` has the same layer shapes as this hyper-network.
    pub fn matches(&self, net: &Network) -> bool {
        self.layer_sizes == net.architecture().layer_sizes()
    }
}

/// Entrywise `[min over members, max over members]` abstraction.
pub fn build_hyper(members: &[&Network]) -> Result<IntervalNetwork, HyperError> {
    let first = *members.first().ok_or(HyperError::NoMembers)?;
    for (index, member) in members.iter().enumerate().skip(1) {
        if member.architecture() != first.architecture() {
            return Err(HyperError::ArchitectureMismatch { index });
        }
    }
    let mut hyper = IntervalNetwork::degenerate(first);
    for member in &members[1..] {
        for (hl, ml) in hyper.layers.iter_mut().zip(member.layers()) {
            for (hrow, mrow) in hl.weights.iter_mut().zip(&ml.weights) {
                for (h, &w) in hrow.iter_mut().zip(mrow) {
                    h.lo = h.lo.min(w);
                    h.hi = h.hi.max(w);
                }
            }
            for (h, &b) in hl.bias.iter_mut().zip(&ml.bias) {
                h.lo = h.lo.min(b);
                h.hi = h.hi.max(b);
            }
        }
    }
    Ok(hyper)
}

/// Sound pre-activation bounds `[l, u]` for every non-input neuron,
/// computed over the input domain `[0,1]^d`.
///
/// Layer `m` of `pre` holds the bounds of `zhat_{m+1,.}`; the output layer
/// has no ReLU, so its post-activation range equals `pre`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreActivationBounds {
    pre: Vec<Vec<Interval>>,
}

impl PreActivationBounds {
    /// Bounds of `zhat_{m,k}` for non-input layer `m` in `1..=L`.
    pub fn pre(&self, m: usize) -> &[Interval] {
        &self.pre[m - 1]
    }

    pub fn num_layers(&self) -> usize {
        self.pre.len()
    }

    /// Post-activation range of layer `m`: ReLU-clipped for hidden layers,
    /// the raw affine range for the output layer.
    pub fn post(&self, m: usize) -> Vec<Interval> {
        let layer = &self.pre[m - 1];
        if m == self.pre.len() {
            layer.clone()
        } else {
            layer.iter().map(|i| i.relu()).collect()
        }
    }
}

/// Interval bound propagation through an interval network (use
/// [`IntervalNetwork::degenerate`] for a concrete network).
pub fn propagate_bounds(net: &IntervalNetwork) -> PreActivationBounds {
    let mut prev: Vec<Interval> = vec![Interval::new(0.0, 1.0); net.input_dim()];
    let last = net.num_layers();
    let mut pre = Vec::with_capacity(last);
    for (m, layer) in net.layers.iter().enumerate() {
        let mut layer_pre = Vec::with_capacity(layer.bias.len());
        for (row, &b) in layer.weights.iter().zip(&layer.bias) {
            let mut acc = b;
            for (w, z) in row.iter().zip(&prev) {
                acc = acc + *w * *z;
            }
            layer_pre.push(acc);
        }
        prev = if m + 1 < last {
            layer_pre.iter().map(|i| i.relu()).collect()
        } else {
            layer_pre.clone()
        };
        pre.push(layer_pre);
    }
    PreActivationBounds { pre }
}

/// Convenience wrapper for a concrete network.
pub fn propagate_bounds_network(net: &Network) -> PreActivationBounds {
    propagate_bounds(&IntervalNetwork::degenerate(net))
}

/// Per-neuron bounds on `z# - z` between a hyper-network and a concrete
/// network evaluated on the same input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceIntervals {
    /// Pre-activation differences `I_zhat`, one vec per non-input layer.
    pre: Vec<Vec<Interval>>,
    /// Post-activation differences `[dl, du]`; equals `pre` at the output
    /// layer, which is affine.
    post: Vec<Vec<Interval>>,
}

impl DifferenceIntervals {
    pub fn pre(&self, m: usize) -> &[Interval] {
        &self.pre[m - 1]
    }

    /// Post-activation difference `[dl_{m,k}, du_{m,k}]` for layer `m` in `1..=L`.
    pub fn post(&self, m: usize) -> &[Interval] {
        &self.post[m - 1]
    }

    pub fn num_layers(&self) -> usize {
        self.post.len()
    }
}

/// Difference-interval recurrence between `net` and `hyper`, using `bounds`
/// (the concrete network's pre-activation bounds) for the range of `z`.
pub fn compute_difference_intervals(
    net: &Network,
    hyper: &IntervalNetwork,
    bounds: &PreActivationBounds,
) -> Result<DifferenceIntervals, HyperError> {
    if !hyper.matches(net) {
        return Err(HyperError::PairMismatch);
    }
    let last = hyper.num_layers();
    let mut pre = Vec::with_capacity(last);
    let mut post = Vec::with_capacity(last);

    // Input layer: z ranges over [0,1]^d and the difference is exactly zero.
    let mut prev_diff: Vec<Interval> = vec![Interval::ZERO; net.input_dim()];
    let mut prev_range: Vec<Interval> = vec![Interval::new(0.0, 1.0); net.input_dim()];

    for m in 1..=last {
        let nl = &net.layers()[m - 1];
        let hl = &hyper.layers()[m - 1];
        let mut layer_pre = Vec::with_capacity(nl.bias.len());
        for k in 0..nl.bias.len() {
            let mut acc = hl.bias[k].sub_scalar(nl.bias[k]);
            for kp in 0..nl.weights[k].len() {
                let w = nl.weights[k][kp];
                let iw = hl.weights[k][kp].sub_scalar(w);
                acc = acc + prev_diff[kp].scale(w) + iw * (prev_range[kp] + prev_diff[kp]);
            }
            layer_pre.push(acc);
        }
        let layer_post: Vec<Interval> = if m < last {
            layer_pre
                .iter()
                .map(|d| Interval::new(-(-d.lo).max(0.0), d.hi.max(0.0)))
                .collect()
        } else {
            layer_pre.clone()
        };
        prev_diff = layer_post.clone();
        prev_range = bounds.post(m);
        pre.push(layer_pre);
        post.push(layer_post);
    }

    Ok(DifferenceIntervals { pre, post })
}
