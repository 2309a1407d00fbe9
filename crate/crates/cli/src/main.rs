//! `prefcal`: generate environments and preference data, train the
//! contrastive loss family on exact tabular policies, sweep beta, reproduce
//! the reward-dynamics experiment and run the verification suites.

mod commands;
mod config;
mod error;
mod gen;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{apply_overrides, Overrides};
use config::ExperimentConfig;
use error::{CliError, CliResult};
use gen::{EnvGenSpec, RefLaw, RewardLaw};
use prefcal_core::verify::SuiteName;
use prefcal_core::{Labeling, OracleMode};

/// Default seed source when a command does not get `--seed`:
/// the PREFCAL_SEED environment variable, then 0.
fn default_seed() -> u64 {
    std::env::var("PREFCAL_SEED")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

#[derive(Parser)]
#[command(
    name = "prefcal",
    version,
    about = "Preference-optimization laboratory on exact tabular policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic environment file.
    GenEnv(GenEnvArgs),
    /// Sample a labeled preference dataset from an environment.
    GenData(GenDataArgs),
    /// Train one configured experiment and write its outputs.
    Train(TrainArgs),
    /// Rerun training across a beta grid and tabulate final metrics.
    SweepBeta(SweepArgs),
    /// Run verification suites against independent oracles.
    Verify(VerifyArgs),
    /// Run the paired uncalibrated/calibrated reward-dynamics experiment.
    Dynamics(DynamicsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RewardLawArg {
    Gaussian,
    Bimodal,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum RefLawArg {
    Uniform,
    Gaussian,
}

#[derive(Args)]
struct GenEnvArgs {
    /// Number of prompts (>= 1).
    #[arg(long)]
    prompts: usize,
    /// Responses per prompt (>= 2).
    #[arg(long)]
    responses: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    reward_law: RewardLawArg,
    /// Gaussian reward scale.
    #[arg(long, default_value_t = 1.0)]
    reward_scale: f64,
    /// Bimodal mode separation.
    #[arg(long, default_value_t = 2.0)]
    reward_gap: f64,
    /// Seed for the reward law (defaults to --seed).
    #[arg(long)]
    reward_seed: Option<u64>,
    /// JSON file with explicit reward rows (reward-law = table).
    #[arg(long)]
    reward_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "uniform")]
    ref_law: RefLawArg,
    /// Reference logit scale (ref-law = gaussian).
    #[arg(long, default_value_t = 1.0)]
    ref_scale: f64,
    /// Seed for the reference law (defaults to --seed + 1).
    #[arg(long)]
    ref_seed: Option<u64>,
    /// Base seed; PREFCAL_SEED, then 0, when absent.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelingArg {
    Bt,
    Hard,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    None,
    Env,
    Convention,
}

#[derive(Args)]
struct GenDataArgs {
    /// Environment file to sample from.
    #[arg(long)]
    env: PathBuf,
    #[arg(long)]
    n_pairs: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "bt")]
    labeling: LabelingArg,
    /// Attach oracle rewards: the environment's table or the +-1/2 pairwise
    /// convention.
    #[arg(long, value_enum, default_value = "none")]
    oracle: OracleArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
    /// One of DPO, BT, IPO, SLIC, CAL_DPO, CAL_IPO, CAL_SLIC.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated beta grid; falls back to the config's grid, then to
    /// the default search grid.
    #[arg(long)]
    betas: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Comma-separated suites (gradients, theorem1, theorem2, identities,
    /// beta_limit); all when omitted.
    #[arg(long)]
    suites: Option<String>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Report file (JSON); an identities CSV lands next to it.
    #[arg(long, default_value = "verify_report.json")]
    out: PathBuf,
}

#[derive(Args)]
struct DynamicsArgs {
    /// Output directory for the paired logs.
    #[arg(long, default_value = "dynamics")]
    out: PathBuf,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenEnv(args) => {
            let base = args.seed.unwrap_or_else(default_seed);
            let reward_seed = args.reward_seed.unwrap_or(base);
            let ref_seed = args.ref_seed.unwrap_or(base.wrapping_add(1));
            let reward_law = match args.reward_law {
                RewardLawArg::Gaussian => RewardLaw::Gaussian {
                    scale: args.reward_scale,
                    seed: reward_seed,
                },
                RewardLawArg::Bimodal => RewardLaw::Bimodal {
                    gap: args.reward_gap,
                    seed: reward_seed,
                },
                RewardLawArg::Table => {
                    let path = args.reward_file.ok_or_else(|| {
                        CliError::Config("--reward-file is required with --reward-law table".into())
                    })?;
                    let text = std::fs::read_to_string(&path).map_err(|e| {
                        CliError::Config(format!("cannot read {}: {e}", path.display()))
                    })?;
                    let values: Vec<Vec<f64>> = serde_json::from_str(&text)
                        .map_err(|e| CliError::Config(format!("bad reward table: {e}")))?;
                    RewardLaw::Table { values }
                }
            };
            let ref_law = match args.ref_law {
                RefLawArg::Uniform => RefLaw::Uniform,
                RefLawArg::Gaussian => RefLaw::GaussianLogits {
                    scale: args.ref_scale,
                    seed: ref_seed,
                },
            };
            let spec = EnvGenSpec {
                prompts: args.prompts,
                responses: args.responses,
                reward_law,
                ref_law,
            };
            commands::cmd_gen_env(&spec, &args.out)
        }
        Command::GenData(args) => commands::cmd_gen_data(
            &args.env,
            args.n_pairs,
            args.seed.unwrap_or_else(default_seed),
            match args.labeling {
                LabelingArg::Bt => Labeling::Bt,
                LabelingArg::Hard => Labeling::Hard,
            },
            match args.oracle {
                OracleArg::None => None,
                OracleArg::Env => Some(OracleMode::Env),
                OracleArg::Convention => Some(OracleMode::Convention),
            },
            &args.out,
        ),
        Command::Train(args) => {
            let mut config = ExperimentConfig::load(&args.config)?;
            apply_overrides(
                &mut config,
                &Overrides {
                    seed: args.seed,
                    beta: args.beta,
                    method: args.method.clone(),
                    steps: args.steps,
                    lr: args.lr,
                    out: args.out.clone(),
                },
            )?;
            let config_dir = args
                .config
                .parent()
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("."));
            commands::cmd_run(&config, &config_dir).map(|_| ())
        }
        Command::SweepBeta(args) => {
            let mut config = ExperimentConfig::load(&args.config)?;
            apply_overrides(
                &mut config,
                &Overrides {
                    seed: args.seed,
                    beta: None,
                    method: args.method.clone(),
                    steps: args.steps,
                    lr: args.lr,
                    out: args.out.clone(),
                },
            )?;
            let betas: Vec<f64> = match &args.betas {
                Some(text) => text
                    .split(',')
                    .map(|part| {
                        part.trim().parse::<f64>().map_err(|e| {
                            CliError::Config(format!("bad beta {part:?} in --betas: {e}"))
                        })
                    })
                    .collect::<CliResult<_>>()?,
                None => config
                    .beta_grid
                    .clone()
                    .unwrap_or_else(|| prefcal_core::DEFAULT_BETA_GRID.to_vec()),
            };
            if betas.is_empty() {
                return Err(CliError::Config("beta grid is empty".into()));
            }
            let config_dir = args
                .config
                .parent()
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("."));
            commands::cmd_sweep(&config, &config_dir, &betas).map(|_| ())
        }
        Command::Verify(args) => {
            let suites: Vec<SuiteName> = match &args.suites {
                None => SuiteName::ALL.to_vec(),
                Some(text) => text
                    .split(',')
                    .map(|part| SuiteName::parse(part.trim()).map_err(CliError::from))
                    .collect::<CliResult<_>>()?,
            };
            commands::cmd_verify(
                &suites,
                args.trials,
                args.seed.unwrap_or_else(default_seed),
                &args.out,
            )
        }
        Command::Dynamics(args) => commands::cmd_dynamics(&args.out),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
