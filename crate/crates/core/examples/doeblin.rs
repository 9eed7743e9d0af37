//! Empirical minorization floor: the smallest arrival density over start
//! cells of a weighted sublevel set, for a few horizons.

use kinwall::collision::{CollisionModel, RateField};
use kinwall::experiments::{doeblin_probe, DoeblinSettings, RunSettings};
use kinwall::geometry::Domain;
use kinwall::measures::WeightSpec;
use kinwall::transport::System;
use kinwall::wall::{BoundaryField, WallModel};

fn main() -> kinwall::Result<()> {
    let wall = WallModel::cercignani_lampis(0.5, 0.5, BoundaryField::Constant(1.0))?;
    let system = System::new(Domain::disk(1.0)?, wall, CollisionModel::bgk(RateField::Constant(1.0), 2)?)?;
    let spec = WeightSpec::for_wall(1.0, 0.1, &system.wall, &system.domain)?;
    let settings = DoeblinSettings {
        horizons: vec![5.0, 10.0],
        starts_per_cell: 40_000,
        arrival_rings: 4,
        arrival_sectors: 4,
        arrival_velocity_cells: 4,
        ..DoeblinSettings::default()
    };
    let run = RunSettings {
        particles: 0,
        seed: 8,
        workers: 2,
    };
    let report = doeblin_probe(&system, &settings, &spec, &run)?;
    println!("lambda {} (smallest useful {:.2}), {} start cells", report.lambda, report.lambda0, report.start_cells.len());
    for ((t, floor), covered) in report.horizons.iter().zip(&report.floors).zip(&report.covered_cells) {
        println!("  T={t}: floor {floor:.3e}, {covered}/{} arrival cells reached from every start", report.arrival_cells);
    }
    println!("positive floor observed: {}", report.observed);
    Ok(())
}
