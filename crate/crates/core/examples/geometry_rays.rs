//! Exit times, footpoints and specular reflection on the three domain shapes.

use kinwall::geometry::{Domain, LevelSetPreset, Vec3};

fn main() -> kinwall::Result<()> {
    let domains = [
        ("unit disk", Domain::disk(1.0)?),
        ("unit ball", Domain::ball(1.0)?),
        (
            "superellipse p=4",
            Domain::implicit2d(LevelSetPreset::Superellipse { exponent: 4.0, scale: 1.0 })?,
        ),
    ];
    let x = Vec3::new(0.2, -0.1, 0.0);
    let v = Vec3::new(0.6, 0.8, 0.0);
    for (name, domain) in &domains {
        let tau = domain.exit_time(&x, &v);
        let tau_back = domain.exit_time(&x, &(-v));
        let q = domain.footpoint(&x, &v).expect("interior point");
        let n = domain.outward_normal(&q)?;
        let w = domain.specular(&q, &v)?;
        println!("{name}: diameter {:.4}, volume {:.4}", domain.diameter(), domain.volume());
        println!("  tau(x, v) = {tau:.6}, tau(x, -v) = {tau_back:.6}");
        println!("  hits wall at ({:.4}, {:.4}), normal ({:.4}, {:.4})", q.x, q.y, n.x, n.y);
        println!("  specular velocity ({:.4}, {:.4}), speed kept: {}", w.x, w.y, (w.norm() - v.norm()).abs() < 1e-12);
        let s = 0.4 * tau;
        let rest = domain.exit_time(&(x + s * v), &v);
        println!("  cocycle residual {:.2e}", tau - s - rest);
    }
    Ok(())
}
