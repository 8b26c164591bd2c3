//! `tsvar` command-line driver.
//!
//! Exit status: 0 on success, 1 on a computation error (or a failed
//! joint-distribution test), 2 on invalid configuration or arguments.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, Overrides};

#[derive(Debug, Parser)]
#[command(name = "tsvar", version, about = "Bayesian SVARs identified through independent Student-t shocks")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the sampler seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of independent chains.
    #[arg(long, global = true)]
    chains: Option<usize>,
    /// Output directory (default: `out` next to the config file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// 1,100,000 sweeps with a 100,000 burn-in instead of the desk settings.
    #[arg(long, global = true)]
    paper_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the model and store the posterior draws.
    Fit,
    /// Label shocks with the configured sign constraints.
    Label {
        /// Chain files to pool (default: the fitted chains in the output directory).
        #[arg(long = "chain")]
        chains: Vec<PathBuf>,
    },
    /// Impulse responses, variance and historical decompositions.
    Analyze {
        #[arg(long = "chain")]
        chains: Vec<PathBuf>,
    },
    /// Generate a synthetic panel from the [simulate] table.
    Simulate,
    /// Joint-distribution test of the sampler.
    Geweke,
}

fn run(cli: Cli) -> anyhow::Result<(String, bool)> {
    let overrides = Overrides { seed: cli.seed, chains: cli.chains, out: cli.out, paper_scale: cli.paper_scale };
    let needs_file = !matches!(cli.command, Command::Geweke);
    if needs_file && cli.config.is_none() {
        return Err(ConfigError("--config is required for this command".into()).into());
    }
    let cfg = config::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Fit => commands::fit(&cfg).map(|m| (m, true)),
        Command::Label { chains } => commands::label(&cfg, &chains).map(|m| (m, true)),
        Command::Analyze { chains } => commands::analyze(&cfg, &chains).map(|m| (m, true)),
        Command::Simulate => commands::simulate(&cfg).map(|m| (m, true)),
        Command::Geweke => commands::geweke(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((msg, ok)) => {
            println!("{msg}");
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
