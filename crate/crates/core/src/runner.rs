//! Subcommand dispatch and output management.
//!
//! Every run writes into `<out>.partial` and renames it to `<out>` on
//! success. Result files and `manifest.json` depend only on the
//! configuration; the worker count and wall-clock time go to
//! `runtime.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiments::{self, RateReport};
use crate::measures::{EmpiricalField, PhaseGrid};
use crate::transport::{simulate_ensemble, EnsembleSettings, InitialLaw, SpatialLaw, System, VelocityLaw};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Steady,
    Rate,
    VerifyKernel,
    Lyapunov,
    Flux,
    Doeblin,
    Counterexample,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Steady => "steady",
            Command::Rate => "rate",
            Command::VerifyKernel => "verify-kernel",
            Command::Lyapunov => "lyapunov",
            Command::Flux => "flux",
            Command::Doeblin => "doeblin",
            Command::Counterexample => "counterexample",
        }
    }
}

/// Result of a run: whether its audit passed, and where the files are.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub dir: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    package: &'static str,
    version: &'static str,
    seed: u64,
    /// Configuration with the worker count removed; workers never change
    /// results.
    config: serde_json::Value,
    files: Vec<&'a str>,
}

#[derive(Serialize)]
struct Runtime {
    workers: usize,
    wall_clock_seconds: f64,
}

fn partial_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_else(|| "run".into());
    name.push(".partial");
    out.with_file_name(name)
}

/// Runs `command` and leaves its artifacts in `out`. `config_dir` resolves
/// relative paths in the configuration.
pub fn run(command: Command, config: &RunConfig, config_dir: &Path, out: &Path) -> Result<Outcome> {
    let violations = config.violations();
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    let staging = partial_path(out);
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;
    let start = Instant::now();
    let result = execute(command, config, config_dir, &staging);
    match result {
        Ok((passed, files)) => {
            write_manifest(command, config, &staging, &files)?;
            write_json(
                &staging.join("runtime.json"),
                &Runtime {
                    workers: config.simulation.workers,
                    wall_clock_seconds: start.elapsed().as_secs_f64(),
                },
            )?;
            if out.exists() {
                fs::remove_dir_all(out)?;
            }
            fs::rename(&staging, out)?;
            Ok(Outcome {
                passed,
                dir: out.to_path_buf(),
            })
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn write_manifest(command: Command, config: &RunConfig, dir: &Path, files: &[String]) -> Result<()> {
    let mut echo = serde_json::to_value(config)?;
    if let Some(sim) = echo.get_mut("simulation").and_then(|s| s.as_object_mut()) {
        sim.remove("workers");
    }
    let manifest = Manifest {
        command: command.name(),
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: config.simulation.seed,
        config: echo,
        files: files.iter().map(String::as_str).collect(),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes a CSV with a header row; `rows` are already formatted cells.
pub fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

/// The three initial laws audited by `lyapunov`: the configured law, a
/// fast shell and a slow ball.
pub fn lyapunov_laws(config: &RunConfig) -> Vec<(String, InitialLaw)> {
    vec![
        ("configured".to_string(), config.simulation.initial.clone()),
        (
            "shell5".to_string(),
            InitialLaw {
                spatial: SpatialLaw::UniformDomain,
                velocity: VelocityLaw::Shell { speed: 5.0 },
            },
        ),
        (
            "ball2".to_string(),
            InitialLaw {
                spatial: SpatialLaw::UniformDomain,
                velocity: VelocityLaw::UniformBall { radius: 2.0 },
            },
        ),
    ]
}

fn write_rate(dir: &Path, report: &RateReport, files: &mut Vec<String>) -> Result<()> {
    write_rows(
        &dir.join("rate_curve.csv"),
        &["time", "distance", "floor"],
        report
            .times
            .iter()
            .zip(&report.distances)
            .zip(&report.floors)
            .map(|((t, d), f)| vec![fmt(*t), fmt(*d), fmt(*f)]),
    )?;
    write_json(&dir.join("rate_report.json"), report)?;
    files.extend(["rate_curve.csv".into(), "rate_report.json".into()]);
    Ok(())
}

fn steady_reference(system: &System, config: &RunConfig, grid: &PhaseGrid) -> Result<(EmpiricalField, experiments::SteadyStateReport)> {
    let e = &config.experiment;
    experiments::steady_state(
        system,
        &config.simulation.initial,
        &config.run_settings(),
        grid,
        e.relax_time,
        e.average_time,
        e.average_samples,
    )
}

fn execute(command: Command, config: &RunConfig, config_dir: &Path, dir: &Path) -> Result<(bool, Vec<String>)> {
    let mut files: Vec<String> = Vec::new();
    let e = &config.experiment;
    if command == Command::VerifyKernel {
        log::info!("verifying kernel normalization");
        let rows = experiments::verify_kernel(&e.kernel_thetas, &e.kernel_r_perps, &e.kernel_r_pars, &e.kernel_speeds)?;
        let passed = rows.iter().all(|r| r.residual.abs() < 1e-6);
        write_rows(
            &dir.join("kernel_residuals.csv"),
            &["theta", "r_perp", "r_par", "speed", "total", "residual", "quadrature_error"],
            rows.iter().map(|r| {
                vec![fmt(r.theta), fmt(r.r_perp), fmt(r.r_par), fmt(r.speed), fmt(r.total), fmt(r.residual), fmt(r.quadrature_error)]
            }),
        )?;
        files.push("kernel_residuals.csv".into());
        return Ok((passed, files));
    }
    let system = config.system(config_dir)?;
    let grid = config.phase_grid(&system.domain);
    let run = config.run_settings();
    let spec = config.weight_spec(&system.domain)?;
    let passed = match command {
        Command::VerifyKernel => unreachable!("handled above"),
        Command::Simulate => {
            log::info!("simulating {} particles", run.particles);
            let mut settings = EnsembleSettings::new(run.particles, run.seed, config.simulation.snapshots.clone(), grid);
            settings.workers = run.workers;
            settings.tracked = vec![spec];
            let snaps = simulate_ensemble(&system, &config.simulation.initial, &settings)?;
            #[derive(Serialize)]
            struct Row {
                time: f64,
                mass: f64,
                weighted_norm: f64,
                events: crate::transport::EventCounts,
            }
            let mut summary = Vec::new();
            for (k, s) in snaps.iter().enumerate() {
                let name = format!("snapshot_{k:03}.csv");
                s.field.write_csv(&dir.join(&name))?;
                files.push(name);
                summary.push(Row {
                    time: s.time,
                    mass: s.field.mass(),
                    weighted_norm: s.field.weighted_norm(0),
                    events: s.events,
                });
            }
            write_json(&dir.join("summary.json"), &summary)?;
            files.push("summary.json".into());
            snaps.iter().all(|s| s.field.is_nonnegative())
        }
        Command::Steady => {
            log::info!("estimating the steady state");
            let (field, report) = steady_reference(&system, config, &grid)?;
            field.write_csv(&dir.join("steady_field.csv"))?;
            write_json(&dir.join("steady_report.json"), &report)?;
            files.extend(["steady_field.csv".into(), "steady_report.json".into()]);
            !report.unconverged
        }
        Command::Rate => {
            let reference = if system.analytic_equilibrium_temperature().is_some() {
                None
            } else {
                log::info!("no explicit steady state; estimating one first");
                Some(steady_reference(&system, config, &grid)?.0)
            };
            log::info!("measuring the convergence curve");
            let report = experiments::convergence_curve(
                &system,
                &config.simulation.initial,
                &run,
                &grid,
                &config.simulation.snapshots,
                reference.as_ref(),
                (e.fit_window[0], e.fit_window[1]),
                e.signal_factor,
            )?;
            write_rate(dir, &report, &mut files)?;
            true
        }
        Command::Lyapunov => {
            log::info!("auditing the weighted-norm inequality");
            let report = experiments::lyapunov_audit(
                &system,
                &lyapunov_laws(config),
                &spec,
                &e.lyapunov_horizons,
                e.lyapunov_step,
                &run,
                &grid,
                e.drift_limit,
            )?;
            write_rows(
                &dir.join("lyapunov.csv"),
                &["law", "horizon", "initial_norm", "final_norm", "integral", "mass", "ratio"],
                report.entries.iter().map(|r| {
                    vec![r.law.clone(), fmt(r.horizon), fmt(r.initial_norm), fmt(r.final_norm), fmt(r.integral), fmt(r.mass), fmt(r.ratio)]
                }),
            )?;
            write_json(&dir.join("lyapunov_report.json"), &report)?;
            files.extend(["lyapunov.csv".into(), "lyapunov_report.json".into()]);
            report.passed
        }
        Command::Flux => {
            log::info!("auditing the boundary flux");
            let report = experiments::flux_audit(
                &system,
                &config.simulation.initial,
                &run,
                &config.simulation.snapshots,
                e.flux_speed_cap,
                e.flux_tolerance,
            )?;
            write_rows(
                &dir.join("flux.csv"),
                &["time", "cumulative_flux"],
                report.times.iter().zip(&report.cumulative_flux).map(|(t, f)| vec![fmt(*t), fmt(*f)]),
            )?;
            write_json(&dir.join("flux_report.json"), &report)?;
            files.extend(["flux.csv".into(), "flux_report.json".into()]);
            report.passed
        }
        Command::Doeblin => {
            log::info!("probing the minorization floor");
            let report = experiments::doeblin_probe(&system, &e.doeblin, &spec, &run)?;
            write_rows(
                &dir.join("doeblin_floors.csv"),
                &["horizon", "floor", "covered_cells"],
                report
                    .horizons
                    .iter()
                    .zip(&report.floors)
                    .zip(&report.covered_cells)
                    .map(|((h, f), c)| vec![fmt(*h), fmt(*f), c.to_string()]),
            )?;
            write_json(&dir.join("doeblin_report.json"), &report)?;
            files.extend(["doeblin_floors.csv".into(), "doeblin_report.json".into()]);
            report.observed
        }
        Command::Counterexample => {
            log::info!("running the concentrated-data experiment");
            let report = experiments::counterexample_run(&system, config.weights.alpha, &e.counterexample_times, &run, &grid)?;
            write_rows(
                &dir.join("counterexample.csv"),
                &["time", "eps", "lhs", "distance", "floor", "initial_weighted_distance", "decay", "implied_constant", "scaled_decay"],
                report.entries.iter().map(|r| {
                    vec![
                        fmt(r.time),
                        fmt(r.eps),
                        fmt(r.lhs),
                        fmt(r.distance),
                        fmt(r.floor),
                        fmt(r.initial_weighted_distance),
                        fmt(r.decay),
                        fmt(r.implied_constant),
                        fmt(r.scaled_decay),
                    ]
                }),
            )?;
            write_json(&dir.join("counterexample_report.json"), &report)?;
            files.extend(["counterexample.csv".into(), "counterexample_report.json".into()]);
            report.min_scaled_decay > 0.0
        }
    };
    Ok((passed, files))
}
