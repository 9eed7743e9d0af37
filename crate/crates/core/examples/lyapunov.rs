//! Weighted-norm Lyapunov audit and boundary flux linearity for a BGK gas.

use kinwall::collision::{CollisionModel, RateField};
use kinwall::experiments::{flux_audit, lyapunov_audit, RunSettings};
use kinwall::geometry::Domain;
use kinwall::measures::{PhaseGrid, WeightSpec};
use kinwall::transport::{InitialLaw, SpatialLaw, System, VelocityLaw};
use kinwall::wall::{BoundaryField, WallModel};

fn main() -> kinwall::Result<()> {
    let wall = WallModel::cercignani_lampis(0.5, 0.5, BoundaryField::Constant(1.0))?;
    let system = System::new(Domain::disk(1.0)?, wall, CollisionModel::bgk(RateField::Constant(1.0), 2)?)?;
    let spec = WeightSpec::for_wall(1.5, 0.1, &system.wall, &system.domain)?;
    let laws = vec![
        ("maxwellian".to_string(), InitialLaw::uniform_maxwellian(1.0)),
        (
            "shell5".to_string(),
            InitialLaw {
                spatial: SpatialLaw::UniformDomain,
                velocity: VelocityLaw::Shell { speed: 5.0 },
            },
        ),
    ];
    let run = RunSettings {
        particles: 20_000,
        seed: 2,
        workers: 2,
    };
    let grid = PhaseGrid::for_domain(&system.domain, 2, 2);
    let report = lyapunov_audit(&system, &laws, &spec, &[2.0, 5.0, 10.0], 0.25, &run, &grid, 3.0)?;
    println!("form: {}", report.form);
    for e in &report.entries {
        println!("  {:<10} T={:>4}: |f0| {:.3}, |f_T| {:.3}, integral {:.3}, ratio {:.3}", e.law, e.horizon, e.initial_norm, e.final_norm, e.integral, e.ratio);
    }
    println!("max drift {:.3}, passed: {}", report.max_drift, report.passed);

    let times: Vec<f64> = (1..=10).map(f64::from).collect();
    let flux = flux_audit(&system, &InitialLaw::uniform_maxwellian(1.0), &run, &times, 6.0, 0.05)?;
    println!(
        "capped wall flux: slope {:.4}, curvature {:.2e}, relative superlinear {:.3}, passed: {}",
        flux.slope, flux.curvature, flux.relative_superlinear, flux.passed
    );
    Ok(())
}
