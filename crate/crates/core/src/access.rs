//! Label-only access with per-class deterministic bounds.
//!
//! A query first checks the memo table, then computes the predicted class
//! and its confidence. Confidence strictly above the class bound answers
//! deterministically; otherwise the exponential mechanism samples a label
//! (probability `e^{eps/2}` on the predicted class against 1 on each
//! other class), and the sampled label is memoized so repeated queries of
//! the same input cannot average the noise away.
//!
//! The naive baselines share the mechanism: one noises every query, the
//! other evaluates the whole leave-one-out family per query.

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::milp::ClassBound;
use crate::nn::{Network, NnError};
use crate::rng::{labels, substream};
use crate::trainer::LooFamily;

/// Which branch served a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryPath {
    Deterministic,
    Noised,
    Memoized,
}

impl QueryPath {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryPath::Deterministic => "deterministic",
            QueryPath::Noised => "noised",
            QueryPath::Memoized => "memo",
        }
    }
}

/// Exact-bit-pattern key of a feature vector.
type Fingerprint = Box<[u64]>;

fn fingerprint(x: &[f64]) -> Fingerprint {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Insertion-ordered memo with a capacity; overflowing evicts the oldest
/// entry.
struct MemoTable {
    map: HashMap<Fingerprint, usize>,
    order: VecDeque<Fingerprint>,
    capacity: usize,
}

impl MemoTable {
    fn new(capacity: usize) -> Self {
        Self {
            map: HashMap::new(),
            order: VecDeque::new(),
            capacity,
        }
    }

    fn get(&self, key: &Fingerprint) -> Option<usize> {
        self.map.get(key).copied()
    }

    /// Insert unless present; returns the winning label either way.
    fn insert_first_wins(&mut self, key: Fingerprint, label: usize) -> usize {
        if let Some(&existing) = self.map.get(&key) {
            return existing;
        }
        if self.capacity == 0 {
            return label;
        }
        if self.map.len() >= self.capacity {
            if let Some(oldest) = self.order.pop_front() {
                self.map.remove(&oldest);
            }
        }
        self.map.insert(key.clone(), label);
        self.order.push_back(key);
        label
    }

    fn len(&self) -> usize {
        self.map.len()
    }
}

pub const DEFAULT_MEMO_CAPACITY: usize = 1_000_000;

#[derive(Debug, thiserror::Error)]
pub enum AccessError {
    #[error("need one bound per class: {got} bounds for {num_classes} classes")]
    BoundCount { got: usize, num_classes: usize },
    #[error("epsilon must be finite and >= 0, got {0}")]
    BadEpsilon(f64),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// A trained network wrapped with its per-class bounds, a privacy budget,
/// and the mechanism's seeded randomness. Queries are safe from multiple
/// threads; two racing first-queries of one input may both sample, and the
/// first insert wins.
pub struct AccessGuard {
    net: Network,
    bounds: Vec<ClassBound>,
    epsilon: f64,
    memo: Mutex<MemoTable>,
    rng: Mutex<ChaCha8Rng>,
}

impl AccessGuard {
    pub fn new(
        net: Network,
        bounds: Vec<ClassBound>,
        epsilon: f64,
        seed: u64,
        memo_capacity: usize,
    ) -> Result<Self, AccessError> {
        if bounds.len() != net.num_classes() {
            return Err(AccessError::BoundCount {
                got: bounds.len(),
                num_classes: net.num_classes(),
            });
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(AccessError::BadEpsilon(epsilon));
        }
        Ok(Self {
            net,
            bounds,
            epsilon,
            memo: Mutex::new(MemoTable::new(memo_capacity)),
            rng: Mutex::new(substream(seed, labels::MECHANISM)),
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn bounds(&self) -> &[ClassBound] {
        &self.bounds
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn memo_len(&self) -> usize {
        self.memo.lock().unwrap().len()
    }

    /// Answer a label-only query.
    pub fn query(&self, x: &[f64]) -> Result<usize, AccessError> {
        Ok(self.query_traced(x)?.0)
    }

    /// Answer a query and report which branch served it.
    pub fn query_traced(&self, x: &[f64]) -> Result<(usize, QueryPath), AccessError> {
        let key = fingerprint(x);
        if let Some(label) = self.memo.lock().unwrap().get(&key) {
            return Ok((label, QueryPath::Memoized));
        }
        let scores = self.net.forward(x)?;
        let predicted = crate::nn::argmax(&scores);
        let confidence = crate::nn::confidence_from_scores(&scores, predicted);
        match self.bounds[predicted] {
            // An infeasible bound problem means no leave-one-out retraining
            // can flip this class: always deterministic.
            ClassBound::NoLeakingInputs => Ok((predicted, QueryPath::Deterministic)),
            ClassBound::Finite(beta) if confidence > beta => {
                Ok((predicted, QueryPath::Deterministic))
            }
            ClassBound::Finite(_) => {
                let sampled = {
                    let mut rng = self.rng.lock().unwrap();
                    exponential_mechanism(
                        predicted,
                        self.net.num_classes(),
                        self.epsilon,
                        &mut *rng,
                    )
                };
                let label = self.memo.lock().unwrap().insert_first_wins(key, sampled);
                Ok((label, QueryPath::Noised))
            }
        }
    }
}

/// Mechanism output distribution: probability proportional to
/// `e^{eps/2}` for the predicted class and 1 for each other class.
pub fn mechanism_probabilities(predicted: usize, num_classes: usize, epsilon: f64) -> Vec<f64> {
    let boost = (epsilon / 2.0).exp();
    let denom = boost + (num_classes as f64 - 1.0);
    (0..num_classes)
        .map(|c| if c == predicted { boost / denom } else { 1.0 / denom })
        .collect()
}

/// Sample a label via inverse CDF over the two-valued probability vector.
pub fn exponential_mechanism(
    predicted: usize,
    num_classes: usize,
    epsilon: f64,
    rng: &mut impl Rng,
) -> usize {
    debug_assert!(predicted < num_classes);
    let boost = (epsilon / 2.0).exp();
    let denom = boost + (num_classes as f64 - 1.0);
    let u: f64 = rng.random::<f64>() * denom;
    if u < boost {
        return predicted;
    }
    // Map the remaining mass uniformly over the other classes in index
    // order.
    let slot = ((u - boost).floor() as usize).min(num_classes - 2);
    let mut others = (0..num_classes).filter(|&c| c != predicted);
    others.nth(slot).unwrap_or(predicted)
}

/// Baseline that noises every query with the worst-case sensitivity.
pub fn naive_noise_query(
    net: &Network,
    x: &[f64],
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<usize, AccessError> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(AccessError::BadEpsilon(epsilon));
    }
    let predicted = net.predict(x)?;
    Ok(exponential_mechanism(
        predicted,
        net.num_classes(),
        epsilon,
        rng,
    ))
}

/// Baseline that evaluates the full leave-one-out family per query:
/// unanimous agreement answers deterministically (consuming no
/// randomness); any disagreement invokes the mechanism on the full
/// network's prediction.
pub fn naive_idp_query(
    family: &LooFamily,
    x: &[f64],
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<(usize, QueryPath), AccessError> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(AccessError::BadEpsilon(epsilon));
    }
    let predicted = family.full.predict(x)?;
    let mut agree = true;
    for (_, member) in family.members() {
        if member.predict(x)? != predicted {
            agree = false;
            break;
        }
    }
    if agree {
        Ok((predicted, QueryPath::Deterministic))
    } else {
        let label = exponential_mechanism(predicted, family.full.num_classes(), epsilon, rng);
        Ok((label, QueryPath::Noised))
    }
}
