//! `poarx`: fit, forecast, simulate, and evaluate multivariate Poisson
//! autoregressive models with exogenous covariates and Frank-copula
//! dependence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use poarx_cli::commands;
use poarx_cli::config::Config;
use poarx_cli::error::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "poarx",
    version,
    about = "Multivariate Poisson autoregressive count models with Frank-copula dependence"
)]
struct Cli {
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Input dataset (CSV with header row).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Random seed for simulation and interval replicates.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for margin fits, folds, and replicates.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the configured model by two-stage maximum likelihood.
    Fit,
    /// Forecast intensities and prediction intervals from a fitted model.
    Forecast {
        /// Fitted-model file written by `fit`.
        #[arg(long)]
        model: PathBuf,
        /// Forecast horizon (overrides the config).
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Generate a synthetic dataset from explicit parameters.
    Simulate {
        /// Number of observations (overrides the config).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Score the configured model (or the four-model menu) by
    /// cross-validation and holdout log scores.
    Evaluate {
        /// Also write the scores as a tidy long-format CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("poarx: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        // A second invocation in-process would fail; the CLI sets it once.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::usage("--config is required"))?;
    let config = Config::load(config_path)?;
    let seed = cli.seed.unwrap_or(config.estimation.seed);
    let out = cli.out.as_deref().ok_or_else(|| CliError::usage("--out is required"))?;

    match &cli.command {
        Command::Fit => {
            let data = require_data(&cli)?;
            commands::cmd_fit(&config, data, out, seed)?;
        }
        Command::Forecast { model, horizon } => {
            let data = require_data(&cli)?;
            commands::cmd_forecast(&config, data, model, *horizon, out, seed)?;
        }
        Command::Simulate { n } => {
            commands::cmd_simulate(&config, *n, seed, out)?;
        }
        Command::Evaluate { csv } => {
            let data = require_data(&cli)?;
            commands::cmd_evaluate(&config, data, out, csv.as_deref(), seed)?;
        }
    }
    Ok(())
}

fn require_data(cli: &Cli) -> CliResult<&std::path::Path> {
    cli.data
        .as_deref()
        .ok_or_else(|| CliError::usage("--data is required for this command"))
}
