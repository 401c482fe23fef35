use rand::Rng;

use crate::hyper::{
    build_hyper, compute_difference_intervals, propagate_bounds, propagate_bounds_network,
    DifferenceIntervals, IntervalNetwork, PreActivationBounds,
};
use crate::nn::{Architecture, Layer, Network};
use crate::rng::substream;

use super::*;

fn backend() -> Box<dyn SolverBackend> {
    backend_by_name("highs").unwrap()
}

struct Pair {
    net: Network,
    hyper: IntervalNetwork,
    net_bounds: PreActivationBounds,
    hyper_bounds: PreActivationBounds,
    diffs: DifferenceIntervals,
}

fn pair_of(net: Network, members: &[&Network]) -> Pair {
    let hyper = build_hyper(members).unwrap();
    let net_bounds = propagate_bounds_network(&net);
    let hyper_bounds = propagate_bounds(&hyper);
    let diffs = compute_difference_intervals(&net, &hyper, &net_bounds).unwrap();
    Pair {
        net,
        hyper,
        net_bounds,
        hyper_bounds,
        diffs,
    }
}

fn encode_pair(pair: &Pair, class: usize, opts: &EncodeOptions) -> EncodedProblem {
    encode(
        &pair.net,
        &pair.hyper,
        class,
        &pair.net_bounds,
        &pair.hyper_bounds,
        &pair.diffs,
        opts,
    )
    .unwrap()
}

fn solve_pair(pair: &Pair, class: usize, opts: &EncodeOptions) -> ClassBound {
    let problem = encode_pair(pair, class, opts);
    let res = solve(&problem.model, backend().as_ref(), &SolveLimits::default()).unwrap();
    result_to_bound(&res)
}

fn oracle_pair(pair: &Pair, class: usize) -> ClassBound {
    exact_oracle(
        &pair.net,
        &pair.hyper,
        class,
        &pair.net_bounds,
        &pair.hyper_bounds,
        backend().as_ref(),
    )
    .unwrap()
}

fn random_net(arch: &[usize], rng: &mut impl Rng, scale: f64) -> Network {
    let architecture = Architecture::new(arch.to_vec()).unwrap();
    let layers = (1..arch.len())
        .map(|m| Layer {
            weights: (0..arch[m])
                .map(|_| (0..arch[m - 1]).map(|_| rng.random_range(-scale..scale)).collect())
                .collect(),
            bias: (0..arch[m]).map(|_| rng.random_range(-scale..scale)).collect(),
        })
        .collect();
    Network::new(architecture, layers).unwrap()
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

/// A hidden layer whose pre-activations straddle zero on [0,1]^2, so every
/// ReLU stays unstable and binary counts are predictable.
fn all_unstable_net() -> Network {
    let arch = Architecture::new(vec![2, 2, 2]).unwrap();
    let layers = vec![
        Layer {
            weights: vec![vec![1.0, -1.0], vec![-1.0, 1.0]],
            bias: vec![0.0, 0.0],
        },
        Layer {
            weights: vec![vec![1.0, -0.5], vec![-0.5, 1.0]],
            bias: vec![0.1, -0.1],
        },
    ];
    Network::new(arch, layers).unwrap()
}

#[test]
fn binary_count_without_relaxation() {
    let net = all_unstable_net();
    let mut rng = substream(1, "milp-count");
    let member = perturbed(&net, &mut rng, 0.05);
    let pair = pair_of(net, &[&member]);
    let opts = EncodeOptions {
        tau: 0.0,
        ..EncodeOptions::default()
    };
    let problem = encode_pair(&pair, 0, &opts);
    // Two unstable hidden ReLUs per copy plus one disjunction binary.
    assert_eq!(problem.model.binary_count(), 2 + 2 + 1);
    assert_eq!(problem.stats.relaxed_hyper_neurons, 0);
}

#[test]
fn binary_count_relax_all() {
    let net = all_unstable_net();
    let mut rng = substream(2, "milp-count");
    let member = perturbed(&net, &mut rng, 0.05);
    let pair = pair_of(net, &[&member]);
    let opts = EncodeOptions {
        tau: f64::INFINITY,
        ..EncodeOptions::default()
    };
    let problem = encode_pair(&pair, 0, &opts);
    // Every hyper ReLU relaxed: only the concrete copy's binaries plus
    // |C| - 1 disjunction binaries remain.
    assert_eq!(problem.model.binary_count(), 2 + 1);
    assert_eq!(problem.stats.relaxed_hyper_neurons, 2);
}

#[test]
fn relax_none_with_nondegenerate_diffs() {
    let net = all_unstable_net();
    let mut rng = substream(3, "milp-count");
    let member = perturbed(&net, &mut rng, 0.05);
    let pair = pair_of(net, &[&member]);
    let problem = encode_pair(
        &pair,
        0,
        &EncodeOptions {
            tau: 0.0,
            ..EncodeOptions::default()
        },
    );
    assert_eq!(problem.stats.relaxed_hyper_neurons, 0);
    // One binary per precisely-encoded unstable ReLU.
    assert_eq!(
        problem.model.binary_count(),
        4 + pair.net.num_classes() - 1
    );
}

#[test]
fn constant_classifier_hyper_has_no_leaking_inputs() {
    // Hyper always scores class 0 far above class 1, so the violation
    // constraint is unsatisfiable.
    let net = all_unstable_net();
    let arch = net.architecture().clone();
    let constant = Network::new(
        arch,
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
    let pair = pair_of(net, &[&constant]);
    assert_eq!(
        solve_pair(&pair, 0, &EncodeOptions::default()),
        ClassBound::NoLeakingInputs
    );
    assert_eq!(oracle_pair(&pair, 0), ClassBound::NoLeakingInputs);
}

#[test]
fn one_hidden_neuron_closed_form() {
    // Net: z = ReLU(2x - 1), scores (z + 0.3, -z). Hyper: identical except
    // the first output bias ranges over [-0.4, 0.3]. The hyper can flip the
    // label only while z <= 0.2, so the bound is 2 * 0.2 + 0.3 = 0.7
    // (active pattern; the inactive pattern tops out at 0.3).
    let arch = Architecture::new(vec![1, 1, 2]).unwrap();
    let net = Network::new(
        arch,
        vec![
            Layer {
                weights: vec![vec![2.0]],
                bias: vec![-1.0],
            },
            Layer {
                weights: vec![vec![1.0], vec![-1.0]],
                bias: vec![0.3, 0.0],
            },
        ],
    )
    .unwrap();
    let mut hyper = IntervalNetwork::degenerate(&net);
    hyper.layers_mut()[1].bias[0] = crate::hyper::Interval::new(-0.4, 0.3);

    let net_bounds = propagate_bounds_network(&net);
    let hyper_bounds = propagate_bounds(&hyper);
    let diffs = compute_difference_intervals(&net, &hyper, &net_bounds).unwrap();
    let pair = Pair {
        net,
        hyper,
        net_bounds,
        hyper_bounds,
        diffs,
    };

    let oracle = oracle_pair(&pair, 0).as_finite().unwrap();
    assert!((oracle - 0.7).abs() < 1e-7, "oracle gave {oracle}");

    let solved = solve_pair(
        &pair,
        0,
        &EncodeOptions {
            tau: 0.0,
            ..EncodeOptions::default()
        },
    )
    .as_finite()
    .unwrap();
    assert!((solved - 0.7).abs() < 1e-6, "solve gave {solved}");
}

#[test]
fn solve_matches_oracle_on_random_singleton_hypers() {
    for seed in 0..20u64 {
        let mut rng = substream(seed, "milp-oracle");
        let net = random_net(&[2, 3, 2], &mut rng, 1.2);
        let member = perturbed(&net, &mut rng, 0.1);
        let pair = pair_of(net, &[&member]);
        let opts = EncodeOptions {
            tau: 0.0,
            ..EncodeOptions::default()
        };
        let solved = solve_pair(&pair, 0, &opts);
        let oracle = oracle_pair(&pair, 0);
        match (solved, oracle) {
            (ClassBound::Finite(a), ClassBound::Finite(b)) => {
                assert!((a - b).abs() < 1e-6, "seed {seed}: solve {a} vs oracle {b}");
            }
            (a, b) => assert_eq!(a, b, "seed {seed}"),
        }
    }
}

#[test]
fn backends_agree() {
    let mut optimal_cases = 0;
    for seed in 90..96u64 {
        let mut rng = substream(seed, "milp-backends");
        let net = random_net(&[2, 3, 2], &mut rng, 1.2);
        let member = perturbed(&net, &mut rng, 0.15);
        let pair = pair_of(net, &[&member]);
        for class in 0..2 {
            let problem = encode_pair(&pair, class, &EncodeOptions::default());
            let limits = SolveLimits::default();
            let a = solve(
                &problem.model,
                backend_by_name("highs").unwrap().as_ref(),
                &limits,
            )
            .unwrap();
            let b = solve(
                &problem.model,
                backend_by_name("microlp").unwrap().as_ref(),
                &limits,
            )
            .unwrap();
            assert_eq!(a.status, b.status, "seed {seed} class {class}");
            if a.status == SolveStatus::Optimal {
                optimal_cases += 1;
                assert!(
                    (a.incumbent.unwrap() - b.incumbent.unwrap()).abs() < 1e-6,
                    "seed {seed} class {class}: {:?} vs {:?}",
                    a.incumbent,
                    b.incumbent
                );
            }
        }
    }
    assert!(optimal_cases >= 3, "only {optimal_cases} feasible cases");
}

#[test]
fn matching_dependencies_are_conservative() {
    for seed in 0..8u64 {
        let mut rng = substream(seed, "milp-md");
        let net = random_net(&[2, 3, 2], &mut rng, 1.2);
        let members: Vec<Network> = (0..3).map(|_| perturbed(&net, &mut rng, 0.08)).collect();
        let refs: Vec<&Network> = members.iter().collect();
        let pair = pair_of(net, &refs);
        let with_md = solve_pair(
            &pair,
            1,
            &EncodeOptions {
                relax_if_similar: false,
                matching_dependencies: true,
                ..EncodeOptions::default()
            },
        );
        let without_md = solve_pair(
            &pair,
            1,
            &EncodeOptions {
                relax_if_similar: false,
                matching_dependencies: false,
                ..EncodeOptions::default()
            },
        );
        match (with_md, without_md) {
            (ClassBound::Finite(a), ClassBound::Finite(b)) => {
                assert!((a - b).abs() < 1e-6, "seed {seed}: {a} vs {b}");
            }
            (a, b) => assert_eq!(a, b, "seed {seed}"),
        }
    }
}

#[test]
fn relaxation_is_monotone_in_tau() {
    let mut rng = substream(17, "milp-tau");
    for _ in 0..6 {
        let net = random_net(&[2, 3, 2], &mut rng, 1.2);
        let members: Vec<Network> = (0..3).map(|_| perturbed(&net, &mut rng, 0.06)).collect();
        let refs: Vec<&Network> = members.iter().collect();
        let pair = pair_of(net, &refs);
        let taus = [0.0, 0.01, 0.1, f64::INFINITY];
        let bounds: Vec<ClassBound> = taus
            .iter()
            .map(|&tau| {
                solve_pair(
                    &pair,
                    0,
                    &EncodeOptions {
                        tau,
                        ..EncodeOptions::default()
                    },
                )
            })
            .collect();
        for w in bounds.windows(2) {
            match (w[0], w[1]) {
                (ClassBound::Finite(a), ClassBound::Finite(b)) => {
                    assert!(b >= a - 1e-7, "tau monotonicity violated: {a} then {b}")
                }
                (a, b) => assert!(b >= a),
            }
        }
    }
}

#[test]
fn bound_is_monotone_in_member_set() {
    let mut rng = substream(29, "milp-subset");
    let net = random_net(&[2, 3, 2], &mut rng, 1.2);
    let members: Vec<Network> = (0..4).map(|_| perturbed(&net, &mut rng, 0.08)).collect();
    let opts = EncodeOptions {
        tau: 0.0,
        ..EncodeOptions::default()
    };
    let mut last = ClassBound::NoLeakingInputs;
    for take in 1..=members.len() {
        let refs: Vec<&Network> = members[..take].iter().collect();
        let pair = pair_of(net.clone(), &refs);
        let bound = solve_pair(&pair, 0, &opts);
        assert!(
            bound >= last
                || matches!((bound, last), (ClassBound::Finite(a), ClassBound::Finite(b)) if a >= b - 1e-7),
            "shrinking set grew the bound: {last:?} -> {bound:?}"
        );
        last = bound;
    }
}

#[test]
fn solved_bound_is_sound_against_sampling() {
    let mut rng = substream(41, "milp-sound");
    let net = random_net(&[2, 3, 2], &mut rng, 1.2);
    let members: Vec<Network> = (0..3).map(|_| perturbed(&net, &mut rng, 0.08)).collect();
    let refs: Vec<&Network> = members.iter().collect();
    let pair = pair_of(net.clone(), &refs);
    for class in 0..2 {
        let bound = solve_pair(&pair, class, &EncodeOptions::default());
        let threshold = match bound {
            ClassBound::Finite(b) => b,
            ClassBound::NoLeakingInputs => f64::NEG_INFINITY,
        };
        for _ in 0..100_000 {
            let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            if net.confidence(&x, class).unwrap() > threshold + 1e-6 {
                for member in &members {
                    assert_eq!(
                        member.predict(&x).unwrap(),
                        class,
                        "member flipped a point above the bound"
                    );
                }
            }
        }
    }
}

#[test]
fn worked_pair_relaxation_ordering() {
    // Exact encoding vs relax-everything on the same pair: the relaxed
    // optimum may only move up.
    let net = all_unstable_net();
    let mut rng = substream(53, "milp-order");
    for _ in 0..5 {
        let member = perturbed(&net, &mut rng, 0.1);
        let pair = pair_of(net.clone(), &[&member]);
        let exact = solve_pair(
            &pair,
            0,
            &EncodeOptions {
                tau: 0.0,
                ..EncodeOptions::default()
            },
        );
        let relaxed = solve_pair(
            &pair,
            0,
            &EncodeOptions {
                tau: f64::INFINITY,
                ..EncodeOptions::default()
            },
        );
        match (exact, relaxed) {
            (ClassBound::Finite(e), ClassBound::Finite(r)) => {
                assert!(r >= e - 1e-7, "relaxed {r} below exact {e}")
            }
            (e, r) => assert!(r >= e),
        }
    }
}

#[test]
fn encode_rejects_bad_arguments() {
    let net = all_unstable_net();
    let pair = pair_of(net.clone(), &[&net]);
    let err = encode(
        &pair.net,
        &pair.hyper,
        0,
        &pair.net_bounds,
        &pair.hyper_bounds,
        &pair.diffs,
        &EncodeOptions {
            tau: -0.5,
            ..EncodeOptions::default()
        },
    )
    .unwrap_err();
    assert!(matches!(err, MilpError::NegativeTau(_)));

    let err = encode(
        &pair.net,
        &pair.hyper,
        7,
        &pair.net_bounds,
        &pair.hyper_bounds,
        &pair.diffs,
        &EncodeOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, MilpError::ClassOutOfRange { got: 7, .. }));
}

#[test]
fn overflowing_bounds_are_rejected() {
    // Forward intervals overflow to infinity: encode must refuse rather
    // than emit rows with non-finite coefficients.
    let huge = Network::new(
        Architecture::new(vec![2, 2, 2]).unwrap(),
        vec![
            Layer {
                weights: vec![vec![1e308, 1e308], vec![1e308, 1e308]],
                bias: vec![0.0, 0.0],
            },
            Layer {
                weights: vec![vec![1e308, 0.0], vec![0.0, 1e308]],
                bias: vec![0.0, 0.0],
            },
        ],
    )
    .unwrap();
    let pair = pair_of(huge.clone(), &[&huge]);
    let err = encode(
        &pair.net,
        &pair.hyper,
        0,
        &pair.net_bounds,
        &pair.hyper_bounds,
        &pair.diffs,
        &EncodeOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, MilpError::InconsistentBounds { .. }));
}

#[test]
fn oracle_rejects_oversized_instances() {
    let mut rng = substream(61, "milp-too-big");
    let net = random_net(&[2, 9, 2], &mut rng, 1.0);
    let pair = pair_of(net.clone(), &[&net]);
    let err = exact_oracle(
        &pair.net,
        &pair.hyper,
        0,
        &pair.net_bounds,
        &pair.hyper_bounds,
        backend().as_ref(),
    )
    .unwrap_err();
    assert!(matches!(err, MilpError::InstanceTooLarge { relus: 18, .. }));
}

#[test]
fn class_bound_ordering_and_serde() {
    assert!(ClassBound::NoLeakingInputs < ClassBound::Finite(-1e30));
    assert!(ClassBound::Finite(0.1) < ClassBound::Finite(0.2));
    let json = serde_json::to_string(&ClassBound::NoLeakingInputs).unwrap();
    assert_eq!(json, "\"no_leaking_inputs\"");
    let back: ClassBound = serde_json::from_str(&json).unwrap();
    assert_eq!(back, ClassBound::NoLeakingInputs);
    let json = serde_json::to_string(&ClassBound::Finite(0.25)).unwrap();
    let back: ClassBound = serde_json::from_str(&json).unwrap();
    assert_eq!(back, ClassBound::Finite(0.25));
}

#[test]
fn unknown_backend_is_an_error() {
    assert!(matches!(
        backend_by_name("gurobi"),
        Err(MilpError::UnknownBackend(_))
    ));
}

#[test]
fn lp_export_of_encoded_model() {
    let net = all_unstable_net();
    let pair = pair_of(net.clone(), &[&net]);
    let problem = encode_pair(&pair, 0, &EncodeOptions::default());
    let lp = problem.model.to_lp_format();
    assert!(lp.contains("Maximize"));
    assert!(lp.contains("beta"));
    assert!(lp.contains("Binaries"));
}
