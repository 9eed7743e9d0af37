//! Cercignani-Lampis and Maxwell wall kernels: normalization by quadrature
//! and a comparison of sampled and integrated outgoing normal speed.

use kinwall::geometry::{Domain, Vec3};
use kinwall::wall::{BoundaryField, WallModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> kinwall::Result<()> {
    let domain = Domain::disk(1.0)?;
    let x = Vec3::new(0.0, -1.0, 0.0);
    let n = domain.outward_normal(&x)?;
    let incidence = 40f64.to_radians();
    let u = 1.5 * Vec3::new(incidence.sin(), -incidence.cos(), 0.0);
    let models = [
        ("CL(0.5, 0.5)", WallModel::cercignani_lampis(0.5, 0.5, BoundaryField::Constant(1.0))?),
        ("CL(0.1, 1.8)", WallModel::cercignani_lampis(0.1, 1.8, BoundaryField::Constant(1.0))?),
        ("Maxwell beta=0.3", WallModel::maxwell(BoundaryField::Constant(0.3), BoundaryField::Constant(1.0))?),
        ("diffuse", WallModel::diffuse(BoundaryField::Constant(1.0))?),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (name, wall) in &models {
        let check = wall.kernel_normalization_check(&domain, &x, &u)?;
        let samples = 200_000;
        let mean_normal: f64 = (0..samples)
            .map(|_| -wall.sample(2, &x, &n, &u, &mut rng).dot(&n))
            .sum::<f64>()
            / samples as f64;
        println!(
            "{name}: flux mass {:.12} (density {:.6} + specular {:.6}), mean outgoing normal speed {:.4}",
            check.total, check.density_part, check.discrete_part, mean_normal
        );
    }
    Ok(())
}
