//! Exponential relaxation when collisions act everywhere, against slow
//! polynomial relaxation when a collisionless hole traps slow particles.

use kinwall::collision::{CollisionModel, RateField};
use kinwall::experiments::{convergence_curve, RunSettings};
use kinwall::geometry::{Domain, Vec3};
use kinwall::measures::PhaseGrid;
use kinwall::transport::{InitialLaw, SpatialLaw, System, VelocityLaw};
use kinwall::wall::{BoundaryField, WallModel};

fn print_fits(label: &str, report: &kinwall::experiments::RateReport) {
    println!("{label}");
    for ((t, d), f) in report.times.iter().zip(&report.distances).zip(&report.floors) {
        println!("  t={t:>5.2}  L1 {d:.4}  floor {f:.4}");
    }
    match &report.exponential {
        Ok(fit) => println!("  exponential: kappa {:.3}, R2 {:.4}", fit.rate, fit.r_squared),
        Err(e) => println!("  exponential: {e}"),
    }
    match &report.polynomial {
        Ok(fit) => println!("  polynomial:  p {:.3}, R2 {:.4}", fit.rate, fit.r_squared),
        Err(e) => println!("  polynomial:  {e}"),
    }
}

fn main() -> kinwall::Result<()> {
    let cl = |a, b| WallModel::cercignani_lampis(a, b, BoundaryField::Constant(1.0));
    let run = RunSettings {
        particles: 100_000,
        seed: 5,
        workers: 2,
    };

    let fast = System::new(Domain::disk(1.0)?, cl(0.5, 0.5)?, CollisionModel::bgk(RateField::Constant(1.0), 2)?)?;
    let start = InitialLaw {
        spatial: SpatialLaw::UniformBall {
            center: [0.3, 0.0, 0.0],
            radius: 0.3,
        },
        velocity: VelocityLaw::Shell { speed: 2.0 },
    };
    let grid = PhaseGrid::for_domain(&fast.domain, 4, 8);
    let times: Vec<f64> = (0..=12).map(|k| 0.25 * k as f64).collect();
    print_fits("constant rate", &convergence_curve(&fast, &start, &run, &grid, &times, None, (0.25, 3.0), 3.0)?);

    let hole = RateField::hole(1.0, Vec3::zeros(), 1.0)?;
    let slow = System::new(Domain::disk(3.0)?, cl(1.0, 1.0)?, CollisionModel::bgk(hole, 2)?)?;
    let grid = PhaseGrid::for_domain(&slow.domain, 4, 8);
    let times: Vec<f64> = (0..=8).map(|k| 5.0 * k as f64).collect();
    print_fits(
        "collisionless hole, concentrated start",
        &convergence_curve(&slow, &InitialLaw::concentrated(0.1), &run, &grid, &times, None, (5.0, 40.0), 3.0)?,
    );
    Ok(())
}
