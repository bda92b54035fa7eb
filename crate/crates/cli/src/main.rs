mod commands;
mod config;
mod error;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{DistributionArgs, OracleArgs};
use crate::config::{Overrides, RunConfig};
use crate::error::{CliError, CliResult};

/// Simulates Micro–Macro entanglement from a quantum-injected optical
/// parametric amplifier and evaluates the separability witness.
#[derive(Parser)]
#[command(name = "micromacro", version)]
struct Cli {
    /// Directory for output files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Flat JSON configuration; omitted keys take the default operating point.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per analysis setting.
    #[arg(long)]
    trials: Option<u64>,
    /// Filter threshold as a multiple of the mean arm signal.
    #[arg(long)]
    threshold_multiple: Option<f64>,
}

impl RunArgs {
    fn load(&self) -> CliResult<RunConfig> {
        RunConfig::load(
            self.config.as_deref(),
            &Overrides {
                seed: self.seed,
                trials: self.trials,
                threshold_multiple: self.threshold_multiple,
            },
        )
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the photon-number distribution P(p, q) of a Macro-state.
    Distribution {
        #[arg(long)]
        gain: f64,
        /// `plus` (Φ^φ) or `perp` (Φ^φ⊥).
        #[arg(long, default_value = "plus")]
        label: String,
        /// Equatorial phase φ of the injected photon.
        #[arg(long, default_value_t = 0.0)]
        phi: f64,
        #[arg(long)]
        max_p: Option<u64>,
        #[arg(long)]
        max_q: Option<u64>,
        /// Also write zero-probability cells.
        #[arg(long)]
        full_grid: bool,
    },
    /// Coincidence counts versus Alice's phase, with a fringe fit.
    Scan(RunArgs),
    /// Visibilities in both equatorial bases and the separability bound.
    Witness(RunArgs),
    /// Acceptance probability and visibilities versus filter threshold.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated thresholds (overrides the configuration).
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
    },
    /// Compare the sampler and the mixture model against dense Fock states.
    OracleCheck {
        #[arg(long, default_value_t = 1.0)]
        gain: f64,
        #[arg(long, default_value_t = 40)]
        cutoff: usize,
        #[arg(long, default_value_t = 200_000)]
        samples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Distribution {
            gain,
            label,
            phi,
            max_p,
            max_q,
            full_grid,
        } => commands::distribution(
            &DistributionArgs {
                gain,
                label,
                phi,
                max_p,
                max_q,
                full_grid,
            },
            &cli.out,
        ),
        Command::Scan(args) => commands::scan(&args.load()?, &cli.out),
        Command::Witness(args) => commands::witness(&args.load()?, &cli.out),
        Command::Sweep { run, thresholds } => {
            let mut cfg = run.load()?;
            if let Some(t) = thresholds {
                cfg.thresholds = t;
            }
            commands::sweep(&cfg, &cli.out)
        }
        Command::OracleCheck {
            gain,
            cutoff,
            samples,
            seed,
        } => commands::oracle_check(
            &OracleArgs {
                gain,
                cutoff,
                samples,
                seed,
            },
            &cli.out,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
