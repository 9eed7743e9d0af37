//! Ensemble simulation in a disk with a collisionless hole: mass, event
//! tallies and the speed distribution over time.

use kinwall::collision::{CollisionModel, RateField};
use kinwall::geometry::{Domain, Vec3};
use kinwall::measures::{maxwellian_speed_cdf, speed_ks, PhaseGrid};
use kinwall::transport::{simulate_ensemble, EnsembleSettings, InitialLaw, SpatialLaw, System, VelocityLaw};
use kinwall::wall::{BoundaryField, WallModel};

fn main() -> kinwall::Result<()> {
    let domain = Domain::disk(1.0)?;
    let wall = WallModel::cercignani_lampis(0.5, 0.5, BoundaryField::Constant(1.0))?;
    let rate = RateField::hole(1.0, Vec3::zeros(), 0.4)?;
    let system = System::new(domain, wall, CollisionModel::bgk(rate, 2)?)?;
    let law = InitialLaw {
        spatial: SpatialLaw::UniformDomain,
        velocity: VelocityLaw::Shell { speed: 2.0 },
    };
    let grid = PhaseGrid::for_domain(&system.domain, 4, 8);
    let mut settings = EnsembleSettings::new(50_000, 11, vec![0.0, 1.0, 2.0, 4.0, 8.0], grid);
    settings.workers = 2;
    for snap in simulate_ensemble(&system, &law, &settings)? {
        let ks = speed_ks(&snap.field, |s| maxwellian_speed_cdf(2, 1.0, s));
        println!(
            "t={:>4}: mass {:.6}, wall hits {:>7}, collisions {:>7}, speed KS to Maxwellian {:.4}",
            snap.time,
            snap.field.mass(),
            snap.events.wall_hits,
            snap.events.collisions,
            ks
        );
    }
    Ok(())
}
