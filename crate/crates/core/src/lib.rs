//! Individual-differential-privacy deterministic bounds for fully-connected
//! ReLU classifiers, plus a guarded label-only access layer.
//!
//! The pipeline: train a classifier and every leave-one-out retrained
//! sibling ([`trainer`]), abstract sets of siblings as interval-weight
//! hyper-networks ([`hyper`]), bound the confidence of label-flipping
//! inputs per class with a MILP-based branch-and-bound ([`milp`], [`bab`]),
//! and wrap the classifier so only queries below the bound receive
//! exponential-mechanism noise ([`access`]).

pub mod access;
pub mod artifacts;
pub mod bab;
pub mod config;
pub mod hyper;
pub mod milp;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod trainer;

pub use access::AccessGuard;
pub use bab::{compute_bound, BabConfig, BoundResult};
pub use milp::ClassBound;
pub use nn::{Architecture, Dataset, Network};
pub use trainer::{train, train_loo_family, LooFamily, TrainConfig};
