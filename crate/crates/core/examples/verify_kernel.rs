//! Normalization residuals of the wall kernel over a parameter grid.

use kinwall::experiments::{default_kernel_grid, verify_kernel};

fn main() -> kinwall::Result<()> {
    let [thetas, r_perps, r_pars, speeds] = default_kernel_grid();
    let rows = verify_kernel(&thetas, &r_perps, &r_pars, &speeds)?;
    let worst = rows.iter().max_by(|a, b| a.residual.abs().total_cmp(&b.residual.abs())).expect("nonempty grid");
    println!("{} parameter combinations", rows.len());
    println!(
        "worst residual {:.2e} at theta {}, r_perp {}, r_par {}, speed {}",
        worst.residual, worst.theta, worst.r_perp, worst.r_par, worst.speed
    );
    Ok(())
}
