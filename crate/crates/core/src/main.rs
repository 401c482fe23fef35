//! Command-line pipeline: synth -> train -> bound -> eval / baseline / grid.
//!
//! Exit codes: 0 success, 2 configuration or artifact error, 3 solver
//! failure (partial bounds are still written), 4 total-time-limit hit (the
//! anytime bound is still written).

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use idpguard::access::{naive_idp_query, naive_noise_query, AccessGuard, DEFAULT_MEMO_CAPACITY};
use idpguard::artifacts::{
    self, bounds_entry, BoundsFile, EvalWriter, FamilyManifest,
};
use idpguard::bab::{compute_bound_with_progress, BabConfig, BabError, ClusterConfig};
use idpguard::config::RunConfig;
use idpguard::milp::backend_by_name;
use idpguard::nn::{Architecture, Network};
use idpguard::rng::{labels, substream};
use idpguard::synth::{export_boundary_grid, generate_synthetic_2d};
use idpguard::trainer::{train_loo_family, TrainConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_TIMEOUT_ANYTIME: u8 = 4;

#[derive(Parser)]
#[command(
    name = "idpguard",
    version,
    about = "Deterministic privacy bounds and guarded label-only access for ReLU classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic 2D two-class dataset CSV.
    Synth(SynthArgs),
    /// Train the full network and its leave-one-out family.
    Train(TrainArgs),
    /// Compute per-class bounds by branch-and-bound over hyper-networks.
    Bound(BoundArgs),
    /// Run guarded label-only queries from a CSV of inputs.
    Eval(EvalArgs),
    /// Run a naive baseline over the same inputs.
    Baseline(BaselineArgs),
    /// Export a 2D boundary grid CSV.
    Grid(GridArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML file with defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of points.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset CSV (features in [0,1], final column `label`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Layer sizes, e.g. `2,8,2`.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the family (manifest + network JSONs).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Family directory produced by `train`.
    #[arg(long)]
    family: PathBuf,
    /// Output bounds JSON.
    #[arg(long)]
    out: PathBuf,
    /// Single class to bound (default: every class).
    #[arg(long)]
    class: Option<usize>,
    /// Relax-if-similar threshold.
    #[arg(long)]
    tau: Option<f64>,
    /// Per-MILP time limit in seconds.
    #[arg(long)]
    per_milp_secs: Option<f64>,
    /// Total time limit in seconds.
    #[arg(long)]
    total_secs: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Serialize queue decisions and zero trace timings for byte-identical
    /// reruns.
    #[arg(long)]
    deterministic: bool,
    /// Solver backend: `highs` or `microlp`.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Drop the matching-dependency rows (ablation).
    #[arg(long)]
    no_matching_deps: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Network JSON.
    #[arg(long)]
    network: PathBuf,
    /// Bounds JSON produced by `bound`.
    #[arg(long)]
    bounds: PathBuf,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV of inputs (a trailing `label` column is ignored).
    #[arg(long)]
    inputs: PathBuf,
    /// Output CSV (`index,label,path`).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    memo_capacity: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineVariant {
    NaiveNoise,
    NaiveIdp,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    variant: BaselineVariant,
    /// Network JSON (naive-noise).
    #[arg(long)]
    network: Option<PathBuf>,
    /// Family directory (naive-idp).
    #[arg(long)]
    family: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    inputs: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Network JSON; alternatively use --family.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Family directory; enables the member-agreement column.
    #[arg(long)]
    family: Option<PathBuf>,
    /// Bounds JSON; enables the above-bound column.
    #[arg(long)]
    bounds: Option<PathBuf>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn solver(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_SOLVER,
            message: message.into(),
        }
    }
}

macro_rules! impl_config_failure {
    ($($ty:ty),*) => {
        $(impl From<$ty> for Failure {
            fn from(e: $ty) -> Self {
                Failure::config(e.to_string())
            }
        })*
    };
}

impl_config_failure!(
    idpguard::artifacts::ArtifactError,
    idpguard::config::ConfigError,
    idpguard::nn::NnError,
    idpguard::trainer::TrainError,
    idpguard::synth::SynthError,
    idpguard::access::AccessError
);

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Bound(args) => cmd_bound(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Baseline(args) => cmd_baseline(args),
        Command::Grid(args) => cmd_grid(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, Failure> {
    match &common.config {
        Some(path) => Ok(RunConfig::load(path)?),
        None => Ok(RunConfig::default()),
    }
}

fn parse_arch(spec: &str) -> Result<Vec<usize>, Failure> {
    spec.split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<Vec<usize>, _>>()
        .map_err(|_| Failure::config(format!("cannot parse architecture '{spec}'")))
}

fn cmd_synth(args: SynthArgs) -> Result<u8, Failure> {
    let config = load_config(&args.common)?;
    let n = args.n.unwrap_or(100);
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let dataset = generate_synthetic_2d(n, seed)?;
    artifacts::save_dataset(&dataset, &args.out)?;
    println!("wrote {} points to {}", dataset.len(), args.out.display());
    Ok(0)
}

fn cmd_train(args: TrainArgs) -> Result<u8, Failure> {
    let config = load_config(&args.common)?;
    let data_path = args
        .data
        .or(config.dataset.clone())
        .ok_or_else(|| Failure::config("no dataset given: pass --data or set `dataset`"))?;
    let out_dir = args
        .out
        .or(config.output_dir.clone())
        .ok_or_else(|| Failure::config("no output directory: pass --out or set `output_dir`"))?;
    let arch_sizes = match &args.arch {
        Some(spec) => parse_arch(spec)?,
        None => config.architecture.clone().unwrap_or(vec![2, 8, 2]),
    };
    let train_config = TrainConfig {
        epochs: args.epochs.or(config.epochs).unwrap_or(50),
        batch_size: args.batch_size.or(config.batch_size).unwrap_or(1024),
        learning_rate: args.learning_rate.or(config.learning_rate).unwrap_or(0.1),
        seed: args.seed.or(config.seed).unwrap_or(0),
    };

    let dataset = artifacts::load_dataset(&data_path)?;
    let arch = Architecture::new(arch_sizes.clone())?;
    let family = train_loo_family(&dataset, &arch, &train_config)?;
    let manifest = FamilyManifest {
        config: train_config,
        architecture: arch_sizes,
        dataset_sha256: artifacts::file_sha256(&data_path)?,
        num_points: dataset.len(),
        num_classes: dataset.num_classes(),
    };
    artifacts::save_family(&family, &manifest, &out_dir)?;
    println!(
        "trained full network + {} leave-one-out members into {}",
        family.len(),
        out_dir.display()
    );
    Ok(0)
}

fn cmd_bound(args: BoundArgs) -> Result<u8, Failure> {
    let config = load_config(&args.common)?;
    let (family, manifest) = artifacts::load_family(&args.family)?;
    let backend_name = args
        .backend
        .or(config.backend.clone())
        .unwrap_or_else(|| "highs".to_string());
    let backend = backend_by_name(&backend_name).map_err(|e| Failure::config(e.to_string()))?;
    let bab_config = BabConfig {
        tau: args.tau.or(config.tau).unwrap_or(0.01),
        matching_dependencies: !args.no_matching_deps,
        per_milp_time_limit: Some(Duration::from_secs_f64(
            args.per_milp_secs.or(config.per_milp_secs).unwrap_or(2400.0),
        )),
        total_time_limit: Some(Duration::from_secs_f64(
            args.total_secs.or(config.total_secs).unwrap_or(28_800.0),
        )),
        workers: args.workers.or(config.workers).unwrap_or(4),
        deterministic: args.deterministic,
        seed: args.seed.or(config.seed).unwrap_or(0),
        cluster: ClusterConfig::default(),
        ..BabConfig::default()
    };

    let classes: Vec<usize> = match args.class {
        Some(c) => vec![c],
        None => match &config.classes {
            Some(list) => list.clone(),
            None => (0..manifest.num_classes).collect(),
        },
    };

    let mut bounds = BoundsFile::new();
    let mut timed_out = false;
    for &class in &classes {
        let result = compute_bound_with_progress(
            &family,
            class,
            &bab_config,
            backend.as_ref(),
            |event| {
                eprintln!(
                    "class {class}: pop subset_size={} anytime={} milps={}",
                    event.subset_size,
                    bound_display(event.anytime),
                    event.milp_count
                );
            },
        );
        match result {
            Ok(report) => {
                timed_out |= report.timed_out;
                println!(
                    "class {class}: beta = {} ({}, {} MILPs)",
                    bound_display(report.beta),
                    if report.exact { "exact" } else { "overapproximate" },
                    report.milp_count
                );
                bounds.insert(class.to_string(), bounds_entry(&report));
            }
            Err(BabError::Solver { source, partial }) => {
                bounds.insert(class.to_string(), bounds_entry(&partial));
                artifacts::save_bounds(&bounds, &args.out)?;
                return Err(Failure::solver(format!(
                    "class {class}: {source}; partial bounds written to {}",
                    args.out.display()
                )));
            }
            Err(other) => return Err(Failure::config(other.to_string())),
        }
    }
    artifacts::save_bounds(&bounds, &args.out)?;
    println!("wrote bounds to {}", args.out.display());
    Ok(if timed_out { EXIT_TIMEOUT_ANYTIME } else { 0 })
}

fn bound_display(bound: idpguard::milp::ClassBound) -> String {
    match bound {
        idpguard::milp::ClassBound::Finite(v) => format!("{v}"),
        idpguard::milp::ClassBound::NoLeakingInputs => "no_leaking_inputs".to_string(),
    }
}

fn cmd_eval(args: EvalArgs) -> Result<u8, Failure> {
    let config = load_config(&args.common)?;
    let net = artifacts::load_network(&args.network)?;
    let bounds_file = artifacts::load_bounds(&args.bounds)?;
    let bounds = artifacts::class_bounds(&bounds_file, net.num_classes(), &args.bounds)?;
    let epsilon = args.epsilon.or(config.epsilon).unwrap_or(1.0);
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let capacity = args
        .memo_capacity
        .or(config.memo_capacity)
        .unwrap_or(DEFAULT_MEMO_CAPACITY);
    let inputs = artifacts::load_inputs(&args.inputs, net.input_dim())?;
    let guard = AccessGuard::new(net, bounds, epsilon, seed, capacity)?;
    let mut writer = EvalWriter::create(&args.out)?;
    for (index, x) in inputs.iter().enumerate() {
        let (label, path) = guard.query_traced(x)?;
        writer.write_row(index, label, path.as_str())?;
    }
    println!("evaluated {} inputs into {}", inputs.len(), args.out.display());
    Ok(0)
}

fn cmd_baseline(args: BaselineArgs) -> Result<u8, Failure> {
    let config = load_config(&args.common)?;
    let epsilon = args.epsilon.or(config.epsilon).unwrap_or(1.0);
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let mut rng = substream(seed, labels::MECHANISM);
    match args.variant {
        BaselineVariant::NaiveNoise => {
            let path = args
                .network
                .ok_or_else(|| Failure::config("naive-noise needs --network"))?;
            let net = artifacts::load_network(&path)?;
            let inputs = artifacts::load_inputs(&args.inputs, net.input_dim())?;
            let mut writer = EvalWriter::create(&args.out)?;
            for (index, x) in inputs.iter().enumerate() {
                let label = naive_noise_query(&net, x, epsilon, &mut rng)?;
                writer.write_row(index, label, "noised")?;
            }
            println!("evaluated {} inputs into {}", inputs.len(), args.out.display());
        }
        BaselineVariant::NaiveIdp => {
            let dir = args
                .family
                .ok_or_else(|| Failure::config("naive-idp needs --family"))?;
            let (family, _) = artifacts::load_family(&dir)?;
            let inputs = artifacts::load_inputs(&args.inputs, family.full.input_dim())?;
            let mut writer = EvalWriter::create(&args.out)?;
            for (index, x) in inputs.iter().enumerate() {
                let (label, path) = naive_idp_query(&family, x, epsilon, &mut rng)?;
                writer.write_row(index, label, path.as_str())?;
            }
            println!("evaluated {} inputs into {}", inputs.len(), args.out.display());
        }
    }
    Ok(0)
}

fn cmd_grid(args: GridArgs) -> Result<u8, Failure> {
    let config = load_config(&args.common)?;
    let resolution = args.resolution.unwrap_or(100);
    let _ = &config;
    let (net, members): (Network, Option<Vec<Network>>) = match (&args.network, &args.family) {
        (Some(path), None) => (artifacts::load_network(path)?, None),
        (None, Some(dir)) => {
            let (family, _) = artifacts::load_family(dir)?;
            let members: Vec<Network> = family.omitted.values().cloned().collect();
            (family.full, Some(members))
        }
        (Some(_), Some(_)) => {
            return Err(Failure::config("pass either --network or --family, not both"))
        }
        (None, None) => return Err(Failure::config("pass --network or --family")),
    };
    let bounds = match &args.bounds {
        Some(path) => {
            let file = artifacts::load_bounds(path)?;
            Some(artifacts::class_bounds(&file, net.num_classes(), path)?)
        }
        None => None,
    };
    let member_refs: Option<Vec<&Network>> =
        members.as_ref().map(|ms| ms.iter().collect());
    let rows = export_boundary_grid(
        &net,
        bounds.as_deref(),
        member_refs.as_deref(),
        resolution,
    )?;
    artifacts::save_grid(&rows, &args.out)?;
    println!("wrote {} grid rows to {}", rows.len(), args.out.display());
    Ok(0)
}
