use std::collections::BTreeMap;

use rand::Rng;

use crate::milp::{backend_by_name, ClassBound, SolverBackend};
use crate::nn::{Architecture, Layer, Network};
use crate::rng::substream;
use crate::trainer::LooFamily;

use super::*;

fn backend() -> Box<dyn SolverBackend> {
    backend_by_name("highs").unwrap()
}

fn exact_config() -> BabConfig {
    BabConfig {
        tau: 0.0,
        deterministic: true,
        ..BabConfig::default()
    }
}

fn base_net() -> Network {
    Network::new(
        Architecture::new(vec![2, 2, 2]).unwrap(),
        vec![
            Layer {
                weights: vec![vec![1.0, -1.0], vec![-1.0, 1.0]],
                bias: vec![0.2, -0.1],
            },
            Layer {
                weights: vec![vec![1.0, -0.6], vec![-0.7, 1.0]],
                bias: vec![0.05, -0.05],
            },
        ],
    )
    .unwrap()
}

fn perturbed(net: &Network, rng: &mut impl Rng, eps: f64) -> Network {
    let layers = net
        .layers()
        .iter()
        .map(|l| Layer {
            weights: l
                .weights
                .iter()
                .map(|row| row.iter().map(|w| w + rng.random_range(-eps..eps)).collect())
                .collect(),
            bias: l.bias.iter().map(|b| b + rng.random_range(-eps..eps)).collect(),
        })
        .collect();
    Network::new(net.architecture().clone(), layers).unwrap()
}

fn family_from(full: Network, members: Vec<Network>) -> LooFamily {
    LooFamily {
        full,
        omitted: members.into_iter().enumerate().collect::<BTreeMap<_, _>>(),
    }
}

/// Three near-copies plus one far member: the first solve covers the whole
/// set, clustering splits {0,1,2} from {3}, and the singleton's larger
/// bound ends the run after exactly three solves.
#[test]
fn four_member_run_has_the_worked_example_shape() {
    let full = base_net();
    let mut rng = substream(1, "bab-worked");
    let mut members: Vec<Network> = (0..3).map(|_| perturbed(&full, &mut rng, 0.01)).collect();
    let mut far = full.clone();
    let mut layers = far.layers().to_vec();
    layers[1].bias[0] -= 0.8;
    layers[1].bias[1] += 0.8;
    far = Network::new(full.architecture().clone(), layers).unwrap();
    members.push(far);
    let family = family_from(full, members);

    let result = compute_bound(&family, 0, &exact_config(), backend().as_ref()).unwrap();

    assert_eq!(result.milp_count, 3, "trace: {:?}", result.trace);
    let sizes: Vec<usize> = result.trace.iter().map(|t| t.subset_size).collect();
    assert_eq!(sizes, vec![4, 3, 1]);
    assert_eq!(result.beta, result.trace[2].bound);
    assert!(result.exact);
    for queued in &result.remaining {
        assert!(result.beta >= *queued);
    }
    // The pop sequence is the anytime bound: non-increasing under exact solves.
    for w in result.pops.windows(2) {
        assert!(w[0] >= w[1]);
    }
}

#[test]
fn singleton_family_runs_one_milp() {
    let full = base_net();
    let mut rng = substream(2, "bab-single");
    let member = perturbed(&full, &mut rng, 0.05);
    let family = family_from(full, vec![member]);
    let cfg = exact_config();
    let result = compute_bound(&family, 0, &cfg, backend().as_ref()).unwrap();
    assert_eq!(result.milp_count, 1);
    let naive = naive_per_point_bound(&family, 0, &cfg, backend().as_ref()).unwrap();
    match (result.beta, naive) {
        (ClassBound::Finite(a), ClassBound::Finite(b)) => assert!((a - b).abs() < 1e-6),
        (a, b) => assert_eq!(a, b),
    }
}

#[test]
fn matches_naive_decomposition_on_random_families() {
    for seed in 0..5u64 {
        let mut rng = substream(seed, "bab-naive");
        let full = perturbed(&base_net(), &mut rng, 0.3);
        let n = 3 + (seed as usize % 4);
        let members: Vec<Network> = (0..n).map(|_| perturbed(&full, &mut rng, 0.1)).collect();
        let family = family_from(full, members);
        let cfg = exact_config();
        for class in 0..2 {
            let bab = compute_bound(&family, class, &cfg, backend().as_ref()).unwrap();
            let naive = naive_per_point_bound(&family, class, &cfg, backend().as_ref()).unwrap();
            match (bab.beta, naive) {
                (ClassBound::Finite(a), ClassBound::Finite(b)) => {
                    assert!(
                        (a - b).abs() < 1e-6,
                        "seed {seed} class {class}: bab {a} vs naive {b}"
                    );
                }
                (a, b) => assert_eq!(a, b, "seed {seed} class {class}"),
            }
            // Termination bound: every branch shrinks subsets, so the task
            // count stays under 2|D|.
            assert!(bab.milp_count <= 2 * family.len());
        }
    }
}

#[test]
fn all_infeasible_returns_no_leaking_inputs() {
    // Every member is a constant classifier that always answers class 0, so
    // no subset's hyper-network can ever violate class 0: every bound
    // problem is infeasible.
    let full = base_net();
    let constant = Network::new(
        full.architecture().clone(),
        vec![
            Layer {
                weights: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
                bias: vec![0.0, 0.0],
            },
            Layer {
                weights: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
                bias: vec![5.0, -5.0],
            },
        ],
    )
    .unwrap();
    let members = vec![constant.clone(), constant.clone(), constant];
    let family = family_from(full, members);
    let result = compute_bound(&family, 0, &exact_config(), backend().as_ref()).unwrap();
    assert_eq!(result.beta, ClassBound::NoLeakingInputs);
    assert!(result.exact);
    // Never branched: one solve of the whole set.
    assert_eq!(result.milp_count, 1);
}

#[test]
fn deterministic_mode_reproduces_results_bitwise() {
    let full = base_net();
    let mut rng = substream(9, "bab-det");
    let members: Vec<Network> = (0..5).map(|_| perturbed(&full, &mut rng, 0.08)).collect();
    let family = family_from(full, members);
    let cfg = BabConfig {
        deterministic: true,
        workers: 4,
        ..BabConfig::default()
    };
    let a = compute_bound(&family, 1, &cfg, backend().as_ref()).unwrap();
    let b = compute_bound(&family, 1, &cfg, backend().as_ref()).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
}

struct FailingBackend;

impl crate::milp::SolverBackend for FailingBackend {
    fn name(&self) -> &str {
        "failing"
    }

    fn solve_model(
        &self,
        _model: &crate::milp::MilpModel,
        _limits: &crate::milp::SolveLimits,
    ) -> Result<crate::milp::SolveResult, crate::milp::BackendFailure> {
        Err(crate::milp::BackendFailure::new("synthetic outage"))
    }
}

#[test]
fn solver_failure_surfaces_partial_result() {
    let full = base_net();
    let mut rng = substream(31, "bab-fail");
    let members: Vec<Network> = (0..3).map(|_| perturbed(&full, &mut rng, 0.05)).collect();
    let family = family_from(full, members);
    match compute_bound(&family, 0, &exact_config(), &FailingBackend) {
        Err(BabError::Solver { source, partial }) => {
            assert!(source.to_string().contains("synthetic outage"));
            // Nothing solved yet: the partial result records the infinite
            // anytime bound and an empty trace.
            assert!(partial.trace.is_empty());
            assert!(!partial.exact);
        }
        other => panic!("expected a solver failure, got {other:?}"),
    }
}

#[test]
fn invalid_class_is_rejected() {
    let full = base_net();
    let family = family_from(full.clone(), vec![full]);
    assert!(matches!(
        compute_bound(&family, 5, &exact_config(), backend().as_ref()),
        Err(BabError::InvalidClass { got: 5, .. })
    ));
}
