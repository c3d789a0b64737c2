//! `ncm`: sample CV-STEM metrics, train the neural contraction metric and
//! run the estimation and control experiments.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{load, parse_methods, ControlCommandConfig, EstimateConfig, PlanConfig, SampleConfig, TrainCommandConfig};
use error::CliResult;

#[derive(Parser)]
#[command(name = "ncm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file; defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WithMethods {
    #[command(flatten)]
    common: Common,
    /// Comma-separated methods, e.g. `ncm,cvstem,ekf`.
    #[arg(long)]
    method: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample trajectories, run the α line search on each and write the θ dataset.
    Sample(Common),
    /// Train the recurrent metric model on a θ dataset.
    Train(Common),
    /// Compare estimators on one disturbance realization.
    Estimate(WithMethods),
    /// Plan the nominal trajectory and synthesize its tracking metric.
    Plan(Common),
    /// Track a stored plan under disturbance with each controller.
    Control(WithMethods),
    /// Run the numerical invariant suite.
    Check,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Sample(c) => {
            let mut cfg: SampleConfig = load(c.config.as_deref())?;
            cfg.seed = c.seed.unwrap_or(cfg.seed);
            cfg.out = c.out.unwrap_or(cfg.out);
            commands::sample(&cfg)
        }
        Command::Train(c) => {
            let mut cfg: TrainCommandConfig = load(c.config.as_deref())?;
            cfg.train.seed = c.seed.unwrap_or(cfg.train.seed);
            cfg.out = c.out.unwrap_or(cfg.out);
            commands::train_cmd(&cfg)
        }
        Command::Estimate(c) => {
            let mut cfg: EstimateConfig = load(c.common.config.as_deref())?;
            cfg.seed = c.common.seed.unwrap_or(cfg.seed);
            cfg.out = c.common.out.unwrap_or(cfg.out);
            if let Some(list) = &c.method {
                cfg.methods = parse_methods(list)?;
            }
            commands::estimate(&cfg)
        }
        Command::Plan(c) => {
            let mut cfg: PlanConfig = load(c.config.as_deref())?;
            cfg.out = c.out.unwrap_or(cfg.out);
            commands::plan(&cfg)
        }
        Command::Control(c) => {
            let mut cfg: ControlCommandConfig = load(c.common.config.as_deref())?;
            cfg.seed = c.common.seed.unwrap_or(cfg.seed);
            cfg.out = c.common.out.unwrap_or(cfg.out);
            if let Some(list) = &c.method {
                cfg.methods = parse_methods(list)?;
            }
            commands::control(&cfg)
        }
        Command::Check => commands::check(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.class());
            ExitCode::from(e.exit_code())
        }
    }
}
