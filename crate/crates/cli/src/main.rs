use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spsfom::Method;

mod commands;
mod config;

use commands::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "spsfom",
    version,
    about = "Efficiency and indistinguishability of cavity-coupled single-photon emitters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file (CSV for sweep, psb and Q_max scans; report copy otherwise).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for randomised validation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Overrides the config's `method`.
    #[arg(long, global = true, value_parser = parse_method)]
    method: Option<Method>,

    /// Worker threads for sweeps (falls back to SPSFOM_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Figures of merit at one operating point.
    Fom,
    /// Two-axis grid of figures of merit, written as CSV.
    Sweep,
    /// Maximise Ibeta over (R, kappa), or scan Q_max against quench detuning.
    Optimize,
    /// Phonon-sideband diagnostics: DW, F(Q), S0 and validity ratios.
    Psb,
    /// Compare the closed forms with the exact oracle on random parameters.
    Validate {
        /// Number of random parameter sets.
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("SPSFOM_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| CliError::usage(format!("SPSFOM_THREADS='{v}' is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = thread_count(cli.threads)?;
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot configure {n} threads: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;

    let ctx = commands::Context::load(cli.config.as_deref(), cli.out, cli.seed, cli.method)?;
    match cli.command {
        Command::Fom => commands::fom(&ctx),
        Command::Sweep => commands::sweep(&ctx),
        Command::Optimize => commands::optimize(&ctx),
        Command::Psb => commands::psb(&ctx),
        Command::Validate { samples } => commands::validate(&ctx, samples),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
