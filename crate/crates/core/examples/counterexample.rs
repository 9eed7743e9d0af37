//! Slow relaxation from concentrated data: the exact killed-transport
//! survival against Monte Carlo, and the implied decay constants.

use kinwall::collision::{CollisionModel, RateField};
use kinwall::experiments::{counterexample_run, RunSettings};
use kinwall::geometry::{Domain, Vec3};
use kinwall::measures::PhaseGrid;
use kinwall::transport::{killed_survival_quadrature, simulate_killed, InitialLaw, System};
use kinwall::wall::{BoundaryField, WallModel};

fn main() -> kinwall::Result<()> {
    let domain = Domain::disk(3.0)?;
    let rate = RateField::hole(1.0, Vec3::zeros(), 1.0)?;
    let times = [1.0, 2.0, 5.0];
    let mc = simulate_killed(&domain, &rate, &InitialLaw::concentrated(1.0), &times, 200_000, 4, 2)?;
    for (k, &t) in times.iter().enumerate() {
        let exact = killed_survival_quadrature(&domain, &rate, 1.0, t)?;
        println!(
            "t={t}: survival quadrature {exact:.5}, Monte Carlo {:.5} +- {:.5}",
            mc.survival[k], mc.std_errors[k]
        );
    }

    let wall = WallModel::cercignani_lampis(1.0, 1.0, BoundaryField::Constant(1.0))?;
    let system = System::new(domain, wall, CollisionModel::bgk(rate, 2)?)?;
    let grid = PhaseGrid::for_domain(&system.domain, 4, 8);
    let run = RunSettings {
        particles: 50_000,
        seed: 9,
        workers: 2,
    };
    let report = counterexample_run(&system, 1.0, &[1.0, 3.0, 7.0], &run, &grid)?;
    for e in &report.entries {
        println!(
            "t={:>3}: eps {:.3}, lower bound {:.4}, distance {:.4}, implied constant {:.3}",
            e.time, e.eps, e.lhs, e.distance, e.implied_constant
        );
    }
    Ok(())
}
