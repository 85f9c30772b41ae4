use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use platoon_cli::commands;
use platoon_cli::{CommonArgs, Failure, PolicyKind, Settings};

#[derive(Parser)]
#[command(name = "platoon", version, about = "Platoon dispatch at a finite-capacity station")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance; writes the policy table, report and grid.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Check the structural properties of a solved or loaded policy.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Policy CSV (state,...,action) to check instead of solving.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Ignore witnesses that involve a truck on its last credit.
        #[arg(long)]
        exclude_expiring: bool,
    },
    /// Coupled simulation of several policies over a parameter grid.
    Experiment {
        #[command(flatten)]
        common: CommonArgs,
        /// Policies to run: optimal, greedy, deadline, delta.
        #[arg(long, value_delimiter = ',', default_value = "optimal,greedy,deadline,delta")]
        policies: Vec<String>,
        /// CSV with columns L,T,p,C_ex,omega,gamma,delta_pred.
        #[arg(long)]
        delta_predictions: Option<PathBuf>,
    },
    /// Label a parameter grid with the best threshold per instance.
    Dataset {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Score every threshold on one instance.
    DeltaSearch {
        #[command(flatten)]
        common: CommonArgs,
        /// Use coupled simulation instead of the stationary distribution.
        #[arg(long)]
        simulated: bool,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Solve { common } => {
            commands::solve(&Settings::resolve(&common)?)?;
        }
        Command::Verify {
            common,
            policy,
            exclude_expiring,
        } => {
            commands::verify(&Settings::resolve(&common)?, policy.as_deref(), exclude_expiring)?;
        }
        Command::Experiment {
            common,
            policies,
            delta_predictions,
        } => {
            let kinds = policies
                .iter()
                .map(|p| PolicyKind::parse(p))
                .collect::<anyhow::Result<Vec<_>>>()?;
            commands::experiment(&Settings::resolve(&common)?, &kinds, delta_predictions.as_deref())?;
        }
        Command::Dataset { common } => {
            commands::dataset(&Settings::resolve(&common)?)?;
        }
        Command::DeltaSearch { common, simulated } => {
            commands::delta_search(&Settings::resolve(&common)?, simulated)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            match err.downcast_ref::<Failure>() {
                Some(Failure::SizeExceeded { .. }) => ExitCode::from(3),
                Some(Failure::Violations { .. }) => ExitCode::from(4),
                None => ExitCode::FAILURE,
            }
        }
    }
}
