//! `beamctl`: boundary null controls for the structurally damped beam.

mod commands;
mod run_config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use run_config::{CommonArgs, Extras, RunConfig};

#[derive(Parser)]
#[command(name = "beamctl", version, about = "Moment-method null controls for u_tt + A^2 u + rho A u_t = 0")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalue table, regime, branch collisions.
    Spectrum {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Minimum-norm control for the initial data.
    Synthesize {
        #[command(flatten)]
        common: CommonArgs,
        /// Control samples written to control.csv.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Synthesize, then check the final state in closed form and by time stepping.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Relative final-state tolerance.
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        oracle_steps: Option<usize>,
    },
    /// Finite-n condensation index estimates for the overdamped branch ratio.
    Condensation {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        tail_start: Option<usize>,
        /// `sqrt:D`, `liouville`, `cf:a0,a1,...` or `p/q`; defaults to the ratio for --rho.
        #[arg(long)]
        ratio: Option<String>,
    },
    /// Control cost over several horizons and the fit of ln cost against 1/T.
    CostSweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated horizons.
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<f64>>,
    },
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Spectrum { common } => commands::cmd_spectrum(&RunConfig::resolve(&common, Extras::default())?),
        Command::Synthesize { common, samples } => {
            commands::cmd_synthesize(&RunConfig::resolve(&common, Extras { samples, ..Default::default() })?)
        }
        Command::Verify { common, tolerance, oracle_steps } => commands::cmd_verify(&RunConfig::resolve(
            &common,
            Extras { tolerance, oracle_steps, ..Default::default() },
        )?),
        Command::Condensation { common, n_max, tail_start, ratio } => commands::cmd_condensation(&RunConfig::resolve(
            &common,
            Extras { n_max, tail_start, ratio, ..Default::default() },
        )?),
        Command::CostSweep { common, horizons } => {
            commands::cmd_cost_sweep(&RunConfig::resolve(&common, Extras { horizons, ..Default::default() })?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code_for(&e))
        }
    }
}
