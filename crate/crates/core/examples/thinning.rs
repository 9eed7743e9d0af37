//! Collision times under a space-dependent rate by Poisson thinning,
//! checked against the closed-form path integral.

use kinwall::collision::RateField;
use kinwall::geometry::Vec3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> kinwall::Result<()> {
    let rate = RateField::hole(2.0, Vec3::new(0.3, 0.0, 0.0), 0.5)?;
    let x = Vec3::new(-1.0, 0.1, 0.0);
    let v = Vec3::new(1.0, 0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 400_000;
    for horizon in [0.5, 1.0, 1.5, 2.0] {
        let hits = (0..n).filter(|_| rate.next_collision(&x, &v, horizon, &mut rng).is_some()).count();
        let exact = 1.0 - (-rate.path_integral(&x, &v, horizon)).exp();
        let p = hits as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        println!("t={horizon}: collided {p:.5} vs exact {exact:.5} ({:+.2} SE)", (p - exact) / se);
    }
    Ok(())
}
