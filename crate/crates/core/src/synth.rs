//! Synthetic 2D data and boundary-grid export.

use rand::Rng;
use thiserror::Error;

use crate::artifacts::GridRow;
use crate::milp::ClassBound;
use crate::nn::{DataPoint, Dataset, Network, NnError};
use crate::rng::{labels, substream};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("boundary grids require 2D inputs, network expects {0}")]
    NotTwoDimensional(usize),
    #[error("grid resolution must be >= 1")]
    ZeroResolution,
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Height of the class boundary at `x1`: a smooth sine wave through the
/// middle of the unit square.
pub fn boundary(x1: f64) -> f64 {
    0.5 + 0.2 * (2.0 * std::f64::consts::PI * x1).sin()
}

/// Two-class dataset in `[0,1]^2` separated by [`boundary`]. Classes
/// alternate point by point, so counts differ by at most one; each point is
/// rejection-sampled onto its class's side. Deterministic from the seed.
pub fn generate_synthetic_2d(n: usize, seed: u64) -> Result<Dataset, SynthError> {
    if n < 2 {
        return Err(SynthError::TooFewPoints(n));
    }
    let mut rng = substream(seed, labels::SYNTH);
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let target = i % 2;
        loop {
            let x1: f64 = rng.random_range(0.0..1.0);
            let x2: f64 = rng.random_range(0.0..1.0);
            let side = usize::from(x2 > boundary(x1));
            if side == target {
                points.push(DataPoint {
                    features: vec![x1, x2],
                    label: target,
                });
                break;
            }
        }
    }
    Ok(Dataset::new(points, 2)?)
}

/// Evaluate a `resolution x resolution` grid of cell centers over
/// `[0,1]^2`: predicted class, its confidence, whether the confidence
/// clears the class bound (when bounds are given), and whether every family
/// member agrees with the network (when members are given).
pub fn export_boundary_grid(
    net: &Network,
    bounds: Option<&[ClassBound]>,
    members: Option<&[&Network]>,
    resolution: usize,
) -> Result<Vec<GridRow>, SynthError> {
    if net.input_dim() != 2 {
        return Err(SynthError::NotTwoDimensional(net.input_dim()));
    }
    if resolution == 0 {
        return Err(SynthError::ZeroResolution);
    }
    let mut rows = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            let x1 = (i as f64 + 0.5) / resolution as f64;
            let x2 = (j as f64 + 0.5) / resolution as f64;
            let x = [x1, x2];
            let scores = net.forward(&x)?;
            let predicted = crate::nn::argmax(&scores);
            let confidence = crate::nn::confidence_from_scores(&scores, predicted);
            let above_bound = bounds.map(|b| match b[predicted] {
                ClassBound::Finite(beta) => confidence > beta,
                ClassBound::NoLeakingInputs => true,
            });
            let members_agree = match members {
                Some(ms) => {
                    let mut agree = true;
                    for m in ms {
                        if m.predict(&x)? != predicted {
                            agree = false;
                            break;
                        }
                    }
                    Some(agree)
                }
                None => None,
            };
            rows.push(GridRow {
                x1,
                x2,
                confidence,
                predicted,
                above_bound,
                members_agree,
            });
        }
    }
    Ok(rows)
}
