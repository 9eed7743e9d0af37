//! Runs a subcommand from a TOML configuration, as the command-line tool
//! does, and lists the files it writes.
//!
//! `cargo run --example config_run -- examples/configs/hole.toml simulate`

use std::path::PathBuf;

use kinwall::config::load_config;
use kinwall::runner::{run, Command};

fn main() -> kinwall::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/hole.toml").into()));
    let command = match args.next().as_deref().unwrap_or("simulate") {
        "steady" => Command::Steady,
        "rate" => Command::Rate,
        "lyapunov" => Command::Lyapunov,
        "flux" => Command::Flux,
        "counterexample" => Command::Counterexample,
        _ => Command::Simulate,
    };
    let config = load_config(&path)?;
    let out = std::env::temp_dir().join(format!("kinwall-example-{}", command.name()));
    let outcome = run(command, &config, path.parent().unwrap_or(&PathBuf::from(".")), &out)?;
    println!("{} passed: {}", command.name(), outcome.passed);
    let mut files: Vec<PathBuf> = std::fs::read_dir(&outcome.dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    files.sort();
    for file in files {
        println!("  {}", file.display());
    }
    Ok(())
}
