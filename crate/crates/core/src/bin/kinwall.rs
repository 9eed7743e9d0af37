use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use kinwall::config::{load_config, RunConfig};
use kinwall::runner::{run, Command};
use kinwall::Error;

#[derive(Clone, Copy, ValueEnum)]
enum Sub {
    Simulate,
    Steady,
    Rate,
    VerifyKernel,
    Lyapunov,
    Flux,
    Doeblin,
    Counterexample,
}

/// Particle simulations and audits for linear kinetic equations with
/// scattering walls.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Sub,
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory. Defaults to `KW_OUT_DIR/<command>`, then
    /// `kinwall-out/<command>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let command = match cli.command {
        Sub::Simulate => Command::Simulate,
        Sub::Steady => Command::Steady,
        Sub::Rate => Command::Rate,
        Sub::VerifyKernel => Command::VerifyKernel,
        Sub::Lyapunov => Command::Lyapunov,
        Sub::Flux => Command::Flux,
        Sub::Doeblin => Command::Doeblin,
        Sub::Counterexample => Command::Counterexample,
    };
    let (mut config, config_dir) = match &cli.config {
        Some(path) => match load_config(path) {
            Ok(c) => (c, path.parent().map(PathBuf::from).unwrap_or_default()),
            Err(Error::Config(violations)) => {
                for v in violations {
                    eprintln!("config error: {v}");
                }
                return ExitCode::from(3);
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(3);
            }
        },
        None => (RunConfig::default(), PathBuf::from(".")),
    };
    if let Some(seed) = cli.seed {
        config.simulation.seed = seed;
    }
    if let Some(workers) = cli.workers {
        config.simulation.workers = workers.max(1);
    }
    let out = cli
        .out
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| {
            let root = std::env::var_os("KW_OUT_DIR").map(PathBuf::from).unwrap_or_else(|| "kinwall-out".into());
            root.join(command.name())
        });
    match run(command, &config, &config_dir, &out) {
        Ok(outcome) if outcome.passed => {
            log::info!("wrote {}", outcome.dir.display());
            ExitCode::SUCCESS
        }
        Ok(outcome) => {
            eprintln!("audit failed; see {}", outcome.dir.display());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
