//! Deterministic SGD training and leave-one-out family generation.
//!
//! Given the same dataset, architecture and config, [`train`] is a pure
//! function: it produces a bit-identical network on every run. All
//! randomness (initialization, batch shuffling) comes from the `train`
//! substream of the config seed, so leave-one-out members share the full
//! model's initialization and shuffle stream and differ only through their
//! training data.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::nn::{Architecture, Dataset, Layer, Network, NnError};
use crate::rng::{labels, substream};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("epochs must be >= 1")]
    ZeroEpochs,
    #[error("batch_size must be >= 1")]
    ZeroBatch,
    #[error("learning_rate must be finite and >= 0, got {0}")]
    BadLearningRate(f64),
    #[error("architecture input size {arch_in} / output size {arch_out} do not match dataset (d={dim}, |C|={num_classes})")]
    ArchDatasetMismatch {
        arch_in: usize,
        arch_out: usize,
        dim: usize,
        num_classes: usize,
    },
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },
    #[error("cannot train a leave-one-out member on an empty set (|D| = 1)")]
    DegenerateFamily,
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Mini-batch SGD hyperparameters. The loss is fixed: cross-entropy over
/// softmax of the raw scores.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::ZeroEpochs);
        }
        if self.batch_size == 0 {
            return Err(TrainError::ZeroBatch);
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(TrainError::BadLearningRate(self.learning_rate));
        }
        Ok(())
    }
}

/// A trained network plus every leave-one-out retrained sibling, keyed by
/// the dataset index of the omitted point.
#[derive(Debug, Clone)]
pub struct LooFamily {
    pub full: Network,
    pub omitted: BTreeMap<usize, Network>,
}

impl LooFamily {
    /// Members in dataset-index order: `(omitted index, network)`.
    pub fn members(&self) -> impl Iterator<Item = (usize, &Network)> {
        self.omitted.iter().map(|(&i, n)| (i, n))
    }

    pub fn len(&self) -> usize {
        self.omitted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omitted.is_empty()
    }
}

/// The seeded initial network: per layer, weights then bias drawn uniformly
/// from `(-1/sqrt(fan_in), +1/sqrt(fan_in))` in a fixed order.
pub fn seeded_initialization(arch: &Architecture, seed: u64) -> Network {
    let mut rng = substream(seed, labels::TRAIN);
    let sizes = arch.layer_sizes();
    let mut layers = Vec::with_capacity(arch.num_layers());
    for m in 1..sizes.len() {
        let fan_in = sizes[m - 1];
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut weights = Vec::with_capacity(sizes[m]);
        for _ in 0..sizes[m] {
            let row: Vec<f64> = (0..fan_in)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            weights.push(row);
        }
        let bias: Vec<f64> = (0..sizes[m])
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        layers.push(Layer { weights, bias });
    }
    Network::new(arch.clone(), layers).expect("seeded layers match the architecture")
}

fn check_compat(dataset: &Dataset, arch: &Architecture) -> Result<(), TrainError> {
    if arch.input_dim() != dataset.dim() || arch.num_classes() != dataset.num_classes() {
        return Err(TrainError::ArchDatasetMismatch {
            arch_in: arch.input_dim(),
            arch_out: arch.num_classes(),
            dim: dataset.dim(),
            num_classes: dataset.num_classes(),
        });
    }
    Ok(())
}

/// Train with mini-batch SGD. Deterministic: identical inputs yield a
/// bit-identical network.
pub fn train(dataset: &Dataset, arch: &Architecture, config: &TrainConfig) -> Result<Network, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    check_compat(dataset, arch)?;

    let mut rng = substream(config.seed, labels::TRAIN);
    let sizes = arch.layer_sizes();

    // Draw the initialization from the stream first, exactly as
    // seeded_initialization does, so lr = 0 reproduces it.
    let mut layers: Vec<Layer> = Vec::with_capacity(arch.num_layers());
    for m in 1..sizes.len() {
        let fan_in = sizes[m - 1];
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut weights = Vec::with_capacity(sizes[m]);
        for _ in 0..sizes[m] {
            weights.push(
                (0..fan_in)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect::<Vec<f64>>(),
            );
        }
        let bias: Vec<f64> = (0..sizes[m])
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        layers.push(Layer { weights, bias });
    }

    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut grads: Vec<Layer> = zero_like(&layers);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            zero_fill(&mut grads);
            let mut batch_loss = 0.0;
            for &i in batch {
                let point = &dataset.points()[i];
                batch_loss += accumulate_gradient(&layers, point.label, &point.features, &mut grads);
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::NanLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            let scale = config.learning_rate / batch.len() as f64;
            for (layer, grad) in layers.iter_mut().zip(&grads) {
                for (wrow, grow) in layer.weights.iter_mut().zip(&grad.weights) {
                    for (w, g) in wrow.iter_mut().zip(grow) {
                        *w -= scale * g;
                    }
                }
                for (b, g) in layer.bias.iter_mut().zip(&grad.bias) {
                    *b -= scale * g;
                }
            }
        }
    }

    Ok(Network::new(arch.clone(), layers)?)
}

/// Train the full model and every leave-one-out sibling with the same seed.
/// Members train in parallel; determinism is unaffected by scheduling
/// because each run draws from its own stream instance.
pub fn train_loo_family(
    dataset: &Dataset,
    arch: &Architecture,
    config: &TrainConfig,
) -> Result<LooFamily, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if dataset.len() == 1 {
        return Err(TrainError::DegenerateFamily);
    }
    check_compat(dataset, arch)?;

    let full = train(dataset, arch, config)?;
    let omitted: Result<Vec<(usize, Network)>, TrainError> = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let reduced = dataset.without_point(i)?;
            let net = train(&reduced, arch, config)?;
            Ok((i, net))
        })
        .collect();
    Ok(LooFamily {
        full,
        omitted: omitted?.into_iter().collect(),
    })
}

/// Cross-entropy loss of the softmax over raw scores. Shared by training
/// and by the finite-difference tests.
pub fn cross_entropy_loss(net: &Network, x: &[f64], label: usize) -> Result<f64, NnError> {
    let scores = net.forward(x)?;
    Ok(loss_from_scores(&scores, label))
}

fn loss_from_scores(scores: &[f64], label: usize) -> f64 {
    let max = scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let log_sum: f64 = scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln() + max;
    log_sum - scores[label]
}

fn zero_like(layers: &[Layer]) -> Vec<Layer> {
    layers
        .iter()
        .map(|l| Layer {
            weights: l.weights.iter().map(|r| vec![0.0; r.len()]).collect(),
            bias: vec![0.0; l.bias.len()],
        })
        .collect()
}

fn zero_fill(grads: &mut [Layer]) {
    for g in grads {
        for row in &mut g.weights {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
        g.bias.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Backprop for one sample; adds the gradient into `grads` and returns the
/// sample loss.
fn accumulate_gradient(layers: &[Layer], label: usize, x: &[f64], grads: &mut [Layer]) -> f64 {
    let last = layers.len() - 1;

    // Forward, keeping pre-activations and post-activations.
    let mut activations: Vec<Vec<f64>> = vec![x.to_vec()];
    let mut pre: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
    for (m, layer) in layers.iter().enumerate() {
        let input = activations.last().unwrap();
        let mut z: Vec<f64> = Vec::with_capacity(layer.bias.len());
        for (row, &b) in layer.weights.iter().zip(&layer.bias) {
            let mut sum = b;
            for (w, a) in row.iter().zip(input) {
                sum += w * a;
            }
            z.push(sum);
        }
        let post = if m < last {
            z.iter().map(|&v| v.max(0.0)).collect()
        } else {
            z.clone()
        };
        pre.push(z);
        activations.push(post);
    }

    let scores = activations.last().unwrap();
    let loss = loss_from_scores(scores, label);

    // delta at the output: softmax(scores) - onehot(label)
    let max = scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let denom: f64 = exps.iter().sum();
    let mut delta: Vec<f64> = exps.iter().map(|e| e / denom).collect();
    delta[label] -= 1.0;

    for m in (0..layers.len()).rev() {
        let input = &activations[m];
        for (k, &d) in delta.iter().enumerate() {
            for (kp, &a) in input.iter().enumerate() {
                grads[m].weights[k][kp] += d * a;
            }
            grads[m].bias[k] += d;
        }
        if m > 0 {
            let mut prev = vec![0.0; input.len()];
            for (k, &d) in delta.iter().enumerate() {
                for (kp, p) in prev.iter_mut().enumerate() {
                    *p += layers[m].weights[k][kp] * d;
                }
            }
            // ReLU gate of the previous hidden layer.
            for (p, &z) in prev.iter_mut().zip(&pre[m - 1]) {
                if z <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    loss
}
