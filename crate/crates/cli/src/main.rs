use std::path::PathBuf;
use std::process::ExitCode;

use autotune_cli::{analyze, synth, thread_cap, tune, CliError, Outcome, Overrides, RunConfig};
use autotune_core::autotune::Mode;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "autotune", version, about = "Frequency-domain auto-tuning of structured motion controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the configured plant into an FRF file.
    Synth(Args),
    /// Tune the configured controller structure.
    Tune(Args),
    /// Check stability and norms of a given controller.
    Analyze(Args),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Ct,
    Dt,
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Sampling time in seconds.
    #[arg(long)]
    ts: Option<f64>,
}

fn setup_threads() -> Result<(), CliError> {
    let cap = thread_cap(std::env::var("AUTOTUNE_THREADS").ok().as_deref())?;
    #[cfg(feature = "parallel")]
    if let Some(n) = cap {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = cap;
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    setup_threads()?;
    let (args, command): (&Args, fn(&RunConfig) -> Result<Outcome, CliError>) = match &cli.command {
        Command::Synth(a) => (a, synth),
        Command::Tune(a) => (a, tune),
        Command::Analyze(a) => (a, analyze),
    };
    let mut cfg = RunConfig::load(&args.config)?;
    cfg.apply(&Overrides {
        seed: args.seed,
        out: args.out.clone(),
        mode: args.mode.map(|m| match m {
            ModeArg::Ct => Mode::Ct,
            ModeArg::Dt => Mode::Dt,
        }),
        ts: args.ts,
    })?;
    command(&cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            match outcome {
                Outcome::Success => {}
                Outcome::Unstable => log::warn!("closed loop not verified stable on every local"),
                Outcome::Infeasible => log::warn!("no stabilizing controller found; report written"),
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
