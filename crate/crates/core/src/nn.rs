//! Datasets, fully-connected ReLU classifiers, and classification confidence.
//!
//! A [`Network`] maps an input in `[0,1]^d` to one raw score per class.
//! Hidden layers apply ReLU; the output layer is affine only, so confidence
//! is a plain score difference. Networks are immutable after construction
//! and safe to evaluate from many threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by dataset and network construction or evaluation.
#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("input has dimension {got}, layer {layer} expects {expected}")]
    DimensionMismatch {
        layer: usize,
        expected: usize,
        got: usize,
    },
    #[error("architecture needs at least one hidden layer, got sizes {0:?}")]
    TooFewLayers(Vec<usize>),
    #[error("layer size at position {0} must be >= 1")]
    EmptyLayer(usize),
    #[error("layer {layer} weight matrix is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    BadWeightShape {
        layer: usize,
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("layer {layer} bias has length {got}, expected {expected}")]
    BadBiasShape {
        layer: usize,
        expected: usize,
        got: usize,
    },
    #[error("layer {layer} contains a non-finite parameter")]
    NonFiniteParameter { layer: usize },
    #[error("class index {got} out of range, have {num_classes} classes")]
    BadClass { got: usize, num_classes: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("point {index} feature {feature} = {value} is outside [0,1]")]
    FeatureOutOfRange {
        index: usize,
        feature: usize,
        value: f64,
    },
    #[error("point {index} has dimension {got}, expected {expected}")]
    BadPointDimension {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("point {index} has label {label}, only {num_classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        num_classes: usize,
    },
}

/// A labeled point with features in `[0,1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub features: Vec<f64>,
    pub label: usize,
}

/// A labeled dataset with a stable point order.
///
/// The index of a point identifies it throughout the toolkit: leave-one-out
/// families, bound traces and baselines all key on dataset indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<DataPoint>,
    dim: usize,
    num_classes: usize,
}

impl Dataset {
    /// Validate and wrap a list of points.
    ///
    /// `num_classes` must cover every label; features must lie in `[0,1]`.
    pub fn new(points: Vec<DataPoint>, num_classes: usize) -> Result<Self, NnError> {
        if points.is_empty() {
            return Err(NnError::EmptyDataset);
        }
        if num_classes < 2 {
            return Err(NnError::TooFewClasses(num_classes));
        }
        let dim = points[0].features.len();
        for (index, p) in points.iter().enumerate() {
            if p.features.len() != dim {
                return Err(NnError::BadPointDimension {
                    index,
                    expected: dim,
                    got: p.features.len(),
                });
            }
            for (feature, &value) in p.features.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(NnError::FeatureOutOfRange {
                        index,
                        feature,
                        value,
                    });
                }
            }
            if p.label >= num_classes {
                return Err(NnError::LabelOutOfRange {
                    index,
                    label: p.label,
                    num_classes,
                });
            }
        }
        Ok(Self {
            points,
            dim,
            num_classes,
        })
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// The dataset with point `index` removed, preserving the order of the rest.
    pub fn without_point(&self, index: usize) -> Result<Self, NnError> {
        let mut points = self.points.clone();
        points.remove(index);
        if points.is_empty() {
            return Err(NnError::EmptyDataset);
        }
        Ok(Self {
            points,
            dim: self.dim,
            num_classes: self.num_classes,
        })
    }
}

/// Layer sizes `[d, k_1, ..., k_L]`; the last entry is the class count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    layer_sizes: Vec<usize>,
}

impl Architecture {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self, NnError> {
        if layer_sizes.len() < 3 {
            return Err(NnError::TooFewLayers(layer_sizes));
        }
        for (i, &s) in layer_sizes.iter().enumerate() {
            if s == 0 {
                return Err(NnError::EmptyLayer(i));
            }
        }
        Ok(Self { layer_sizes })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of non-input layers (hidden layers plus the output layer).
    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }
}

/// Weights and bias of one fully-connected layer.
///
/// `weights[k][k']` connects input neuron `k'` to output neuron `k`
/// (shape `k_m x k_{m-1}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// A fully-connected ReLU classifier with concrete parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(arch: Architecture, layers: Vec<Layer>) -> Result<Self, NnError> {
        let sizes = arch.layer_sizes();
        if layers.len() != arch.num_layers() {
            return Err(NnError::TooFewLayers(sizes.to_vec()));
        }
        for (m, layer) in layers.iter().enumerate() {
            let rows = sizes[m + 1];
            let cols = sizes[m];
            if layer.weights.len() != rows || layer.weights.iter().any(|r| r.len() != cols) {
                let got_rows = layer.weights.len();
                let got_cols = layer.weights.first().map_or(0, Vec::len);
                return Err(NnError::BadWeightShape {
                    layer: m + 1,
                    rows,
                    cols,
                    got_rows,
                    got_cols,
                });
            }
            if layer.bias.len() != rows {
                return Err(NnError::BadBiasShape {
                    layer: m + 1,
                    expected: rows,
                    got: layer.bias.len(),
                });
            }
            let finite = layer
                .weights
                .iter()
                .flatten()
                .chain(layer.bias.iter())
                .all(|v| v.is_finite());
            if !finite {
                return Err(NnError::NonFiniteParameter { layer: m + 1 });
            }
        }
        Ok(Self { arch, layers })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes()
    }

    /// Raw output scores: affine + ReLU through the hidden layers, affine at
    /// the output layer.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                layer: 0,
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut activ = x.to_vec();
        let last = self.layers.len() - 1;
        for (m, layer) in self.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.bias.len());
            for (row, &b) in layer.weights.iter().zip(&layer.bias) {
                let mut sum = b;
                for (w, a) in row.iter().zip(&activ) {
                    sum += w * a;
                }
                next.push(if m < last { sum.max(0.0) } else { sum });
            }
            activ = next;
        }
        Ok(activ)
    }

    /// All post-activation values, layer by layer (output layer last, affine).
    ///
    /// Used by the difference-interval containment checks, which need every
    /// intermediate neuron.
    pub fn forward_trace(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                layer: 0,
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut trace = Vec::with_capacity(self.layers.len());
        let mut activ = x.to_vec();
        let last = self.layers.len() - 1;
        for (m, layer) in self.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.bias.len());
            for (row, &b) in layer.weights.iter().zip(&layer.bias) {
                let mut sum = b;
                for (w, a) in row.iter().zip(&activ) {
                    sum += w * a;
                }
                next.push(if m < last { sum.max(0.0) } else { sum });
            }
            trace.push(next.clone());
            activ = next;
        }
        Ok(trace)
    }

    /// Classification confidence in class `c`:
    /// the score of `c` minus the highest other score.
    pub fn confidence(&self, x: &[f64], c: usize) -> Result<f64, NnError> {
        if c >= self.num_classes() {
            return Err(NnError::BadClass {
                got: c,
                num_classes: self.num_classes(),
            });
        }
        let scores = self.forward(x)?;
        Ok(confidence_from_scores(&scores, c))
    }

    /// Predicted class: argmax of the scores, ties broken by lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize, NnError> {
        let scores = self.forward(x)?;
        Ok(argmax(&scores))
    }

    /// Flatten all parameters in a fixed order (per layer: weights row-major,
    /// then bias). Used for parameter-space clustering.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for row in &layer.weights {
                out.extend_from_slice(row);
            }
            out.extend_from_slice(&layer.bias);
        }
        out
    }
}

/// Score difference `scores[c] - max_{c' != c} scores[c']`.
pub fn confidence_from_scores(scores: &[f64], c: usize) -> f64 {
    let best_other = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != c)
        .map(|(_, &s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    scores[c] - best_other
}

/// Argmax with ties broken by lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn constant_net(biases: &[f64]) -> Network {
        // Zero weights everywhere; output biases pin the scores.
        let c = biases.len();
        let arch = Architecture::new(vec![2, 1, c]).unwrap();
        let layers = vec![
            Layer {
                weights: vec![vec![0.0, 0.0]],
                bias: vec![0.0],
            },
            Layer {
                weights: vec![vec![0.0]; c],
                bias: biases.to_vec(),
            },
        ];
        Network::new(arch, layers).unwrap()
    }

    #[test]
    fn zero_weight_network_returns_output_bias() {
        let net = constant_net(&[1.0, -1.0]);
        assert_eq!(net.forward(&[0.3, 0.9]).unwrap(), vec![1.0, -1.0]);
        assert_eq!(net.forward(&[0.0, 0.0]).unwrap(), vec![1.0, -1.0]);
    }

    #[test]
    fn relu_passthrough_on_nonnegative_input() {
        // Single hidden neuron, w=1, b=0, identity output row.
        let arch = Architecture::new(vec![1, 1, 2]).unwrap();
        let layers = vec![
            Layer {
                weights: vec![vec![1.0]],
                bias: vec![0.0],
            },
            Layer {
                weights: vec![vec![1.0], vec![0.0]],
                bias: vec![0.0, 0.0],
            },
        ];
        let net = Network::new(arch, layers).unwrap();
        for &x in &[0.0, 0.25, 0.5, 1.0] {
            assert_eq!(net.forward(&[x]).unwrap()[0], x);
        }
    }

    /// Independent forward pass used as an oracle: accumulates in a different
    /// order (transposed loop) and applies ReLU via a branch.
    #[allow(clippy::needless_range_loop)]
    fn forward_oracle(net: &Network, x: &[f64]) -> Vec<f64> {
        let mut activ = x.to_vec();
        let last = net.layers().len() - 1;
        for (m, layer) in net.layers().iter().enumerate() {
            let rows = layer.bias.len();
            let mut pre = layer.bias.clone();
            for (kp, &a) in activ.iter().enumerate() {
                for k in 0..rows {
                    pre[k] += layer.weights[k][kp] * a;
                }
            }
            if m < last {
                for v in &mut pre {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            activ = pre;
        }
        activ
    }

    #[test]
    fn forward_matches_independent_recomputation() {
        let arch = Architecture::new(vec![2, 2, 2]).unwrap();
        let layers = vec![
            Layer {
                weights: vec![vec![0.4, -0.7], vec![-0.2, 0.9]],
                bias: vec![0.1, -0.3],
            },
            Layer {
                weights: vec![vec![1.2, -0.5], vec![0.3, 0.8]],
                bias: vec![0.05, -0.1],
            },
        ];
        let net = Network::new(arch, layers).unwrap();
        let x = [0.3, 0.7];
        let got = net.forward(&x).unwrap();
        let want = forward_oracle(&net, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "got {g}, want {w}");
        }
    }

    #[test]
    fn confidence_examples() {
        let net = constant_net(&[0.6, 0.4]);
        assert!((net.confidence(&[0.1, 0.1], 0).unwrap() - 0.2).abs() < 1e-15);

        let tie = constant_net(&[0.5, 0.5]);
        assert_eq!(tie.confidence(&[0.0, 0.0], 0).unwrap(), 0.0);

        let three = constant_net(&[1.0, 3.0, 2.0]);
        assert_eq!(three.confidence(&[0.0, 0.0], 1).unwrap(), 1.0);
    }

    #[test]
    fn predict_examples_and_tie_break() {
        assert_eq!(constant_net(&[0.6, 0.4]).predict(&[0.0, 0.0]).unwrap(), 0);
        assert_eq!(constant_net(&[0.5, 0.5]).predict(&[0.0, 0.0]).unwrap(), 0);
        assert_eq!(
            constant_net(&[0.0, 1.0, 0.0]).predict(&[0.0, 0.0]).unwrap(),
            1
        );
    }

    #[test]
    fn forward_dimension_mismatch_names_layer() {
        let net = constant_net(&[0.0, 0.0]);
        let err = net.forward(&[0.5]).unwrap_err();
        assert_eq!(
            err,
            NnError::DimensionMismatch {
                layer: 0,
                expected: 2,
                got: 1
            }
        );
    }

    #[test]
    fn dataset_validation() {
        let ok = Dataset::new(
            vec![
                DataPoint {
                    features: vec![0.0, 1.0],
                    label: 0,
                },
                DataPoint {
                    features: vec![0.5, 0.5],
                    label: 1,
                },
            ],
            2,
        )
        .unwrap();
        assert_eq!(ok.dim(), 2);

        let bad_feature = Dataset::new(
            vec![DataPoint {
                features: vec![1.5],
                label: 0,
            }],
            2,
        );
        assert!(matches!(
            bad_feature,
            Err(NnError::FeatureOutOfRange { index: 0, .. })
        ));

        let bad_label = Dataset::new(
            vec![DataPoint {
                features: vec![0.5],
                label: 2,
            }],
            2,
        );
        assert!(matches!(bad_label, Err(NnError::LabelOutOfRange { .. })));
    }

    fn small_net_strategy() -> impl Strategy<Value = (Network, Vec<f64>)> {
        let w = -2.0..2.0f64;
        (
            proptest::collection::vec(w.clone(), 6),
            proptest::collection::vec(w.clone(), 3),
            proptest::collection::vec(w.clone(), 9),
            proptest::collection::vec(w, 3),
            proptest::collection::vec(0.0..1.0f64, 2),
        )
            .prop_map(|(w1, b1, w2, b2, x)| {
                let arch = Architecture::new(vec![2, 3, 3]).unwrap();
                let layers = vec![
                    Layer {
                        weights: w1.chunks(2).map(<[f64]>::to_vec).collect(),
                        bias: b1,
                    },
                    Layer {
                        weights: w2.chunks(3).map(<[f64]>::to_vec).collect(),
                        bias: b2,
                    },
                ];
                (Network::new(arch, layers).unwrap(), x)
            })
    }

    proptest! {
        #[test]
        fn predicted_class_has_nonnegative_confidence((net, x) in small_net_strategy()) {
            let c = net.predict(&x).unwrap();
            prop_assert!(net.confidence(&x, c).unwrap() >= 0.0);
        }

        #[test]
        fn positive_confidence_implies_prediction((net, x) in small_net_strategy()) {
            for c in 0..net.num_classes() {
                if net.confidence(&x, c).unwrap() > 0.0 {
                    prop_assert_eq!(net.predict(&x).unwrap(), c);
                }
            }
        }

        #[test]
        fn forward_is_deterministic((net, x) in small_net_strategy()) {
            let a = net.forward(&x).unwrap();
            let b = net.forward(&x).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }
}
