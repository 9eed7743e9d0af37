//! Steady state of a BGK gas in a disk with a CL wall at unit temperature,
//! compared with the exact uniform Maxwellian.

use kinwall::collision::{CollisionModel, RateField};
use kinwall::experiments::{steady_state, RunSettings};
use kinwall::geometry::Domain;
use kinwall::measures::PhaseGrid;
use kinwall::transport::{InitialLaw, SpatialLaw, System, VelocityLaw};
use kinwall::wall::{BoundaryField, WallModel};

fn main() -> kinwall::Result<()> {
    let wall = WallModel::cercignani_lampis(1.0, 1.0, BoundaryField::Constant(1.0))?;
    let system = System::new(Domain::disk(1.0)?, wall, CollisionModel::bgk(RateField::Constant(1.0), 2)?)?;
    let start = InitialLaw {
        spatial: SpatialLaw::UniformDomain,
        velocity: VelocityLaw::Shell { speed: 2.0 },
    };
    let run = RunSettings {
        particles: 50_000,
        seed: 1,
        workers: 2,
    };
    let grid = PhaseGrid::for_domain(&system.domain, 4, 8);
    let (field, report) = steady_state(&system, &start, &run, &grid, 10.0, 4.0, 5)?;
    println!("analytic temperature: {:?}", report.analytic_theta);
    println!("speed KS to Maxwellian: {:.4}", report.speed_ks.unwrap_or(f64::NAN));
    println!("max spatial deviation: {:.4}", report.spatial_max_deviation.unwrap_or(f64::NAN));
    println!(
        "replica distance {:.4} (floor {:.4}), unconverged: {}",
        report.replica_distance.value, report.replica_distance.floor, report.unconverged
    );
    if let Some(d) = &report.distance_to_analytic {
        println!("distance to analytic: {:.4} (floor {:.4})", d.value, d.floor);
    }
    println!("spatial marginal: {:?}", field.spatial_marginal().iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>());
    Ok(())
}
