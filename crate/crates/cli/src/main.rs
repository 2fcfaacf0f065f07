//! `ewald`: command-line front end for the Ewald evaluators.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

mod compute;
mod config;
mod run;
mod sweep;
mod tune;

use config::{usage, CliResult, Config};

/// Periodic Coulomb potentials and forces: direct Ewald, Spectral Ewald and SPME.
#[derive(Parser, Debug)]
#[command(name = "ewald", version, about)]
struct Cli {
    /// Config file of `key = value` lines using the long flag names; flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads; also EWALD_THREADS. Defaults to all cores
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log more (-v info, -vv debug)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate one system and write per-particle potentials and forces
    Compute(compute::ComputeArgs),
    /// Errors, estimates and stage timings along one parameter axis
    Sweep(sweep::SweepArgs),
    /// Time the kernels and write a runtime profile
    Calibrate(tune::CalibrateArgs),
    /// Choose parameters for a tolerance
    Tune(tune::TuneArgs),
    /// Write a generated test system
    Gen(compute::GenArgs),
}

/// Flag, then EWALD_THREADS, then the config file.
fn thread_count(flag: Option<usize>, cfg: &Config) -> CliResult<Option<usize>> {
    let env = match std::env::var("EWALD_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) => Some(n),
            Err(_) => {
                return usage(format!(
                    "EWALD_THREADS must be a positive integer, got '{v}'"
                ))
            }
        },
        Err(_) => None,
    };
    let n = cfg.pick("threads", flag.or(env))?;
    if n == Some(0) {
        return usage("thread count must be positive");
    }
    Ok(n)
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(n) = thread_count(cli.threads, &cfg)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config::CliError::Failed(e.to_string()))?;
    }
    match cli.command {
        Command::Compute(a) => compute::compute(a, &cfg),
        Command::Sweep(a) => sweep::sweep(a, &cfg),
        Command::Calibrate(a) => tune::run_calibrate(a, &cfg),
        Command::Tune(a) => tune::run_tune(a, &cfg),
        Command::Gen(a) => compute::gen(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ewald: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
