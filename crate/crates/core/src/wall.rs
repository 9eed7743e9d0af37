//! Gas-surface interaction: Cercignani-Lampis and Maxwell reflection with a
//! position-dependent wall temperature.
//!
//! Velocities at a boundary point `x` are split into a normal part
//! `v_perp = (v . n) n` and a tangential part `v_par = v - v_perp`.
//! Incoming velocities `u` satisfy `u . n > 0` and reflected velocities
//! `v . n < 0`, with `n` the outward normal.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::geometry::{reflect, tangent_basis, Domain, Vec3};
use crate::quad;

/// Number of thermal standard deviations kept by the flux quadratures.
pub const TRUNCATION_WIDTHS: f64 = 12.0;

/// Scalar field on the boundary: constant, or
/// `base * (1 + amplitude * cos(mode * azimuth(x)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryField {
    Constant(f64),
    Angular { base: f64, amplitude: f64, mode: u32 },
}

/// Wall temperature, in velocity-squared units.
pub type TemperatureField = BoundaryField;

impl BoundaryField {
    pub fn at(&self, x: &Vec3) -> f64 {
        match *self {
            BoundaryField::Constant(c) => c,
            BoundaryField::Angular {
                base,
                amplitude,
                mode,
            } => base * (1.0 + amplitude * (mode as f64 * x.y.atan2(x.x)).cos()),
        }
    }

    pub fn inf(&self) -> f64 {
        match *self {
            BoundaryField::Constant(c) => c,
            BoundaryField::Angular {
                base,
                amplitude,
                mode,
            } => {
                if mode == 0 {
                    base * (1.0 + amplitude)
                } else {
                    base * (1.0 - amplitude.abs())
                }
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            BoundaryField::Constant(c) => c,
            BoundaryField::Angular {
                base,
                amplitude,
                mode,
            } => {
                if mode == 0 {
                    base * (1.0 + amplitude)
                } else {
                    base * (1.0 + amplitude.abs())
                }
            }
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match *self {
            BoundaryField::Constant(c) => Some(c),
            BoundaryField::Angular {
                base,
                amplitude,
                mode,
            } if mode == 0 || amplitude == 0.0 => Some(base * (1.0 + if mode == 0 { amplitude } else { 0.0 })),
            _ => None,
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            BoundaryField::Constant(c) => c.is_finite(),
            BoundaryField::Angular {
                base, amplitude, ..
            } => base.is_finite() && amplitude.is_finite(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WallModel {
    CercignaniLampis {
        r_perp: f64,
        r_par: f64,
        theta: TemperatureField,
    },
    Maxwell {
        beta: BoundaryField,
        theta: TemperatureField,
    },
}

impl WallModel {
    pub fn cercignani_lampis(r_perp: f64, r_par: f64, theta: TemperatureField) -> Result<Self> {
        if !(r_perp > 0.0 && r_perp <= 1.0) {
            return Err(invalid("wall.r_perp", format!("{r_perp} not in (0, 1]")));
        }
        if !(r_par > 0.0 && r_par < 2.0) {
            return Err(invalid("wall.r_par", format!("{r_par} not in (0, 2)")));
        }
        check_theta(&theta)?;
        Ok(WallModel::CercignaniLampis {
            r_perp,
            r_par,
            theta,
        })
    }

    pub fn maxwell(beta: BoundaryField, theta: TemperatureField) -> Result<Self> {
        if !beta.is_finite() || !(beta.inf() > 0.0 && beta.sup() <= 1.0) {
            return Err(invalid(
                "wall.beta",
                format!("accommodation must lie in [beta0, 1] with beta0 > 0 (got [{}, {}])", beta.inf(), beta.sup()),
            ));
        }
        check_theta(&theta)?;
        Ok(WallModel::Maxwell { beta, theta })
    }

    /// Pure specular reflection (`beta = 0`). Outside the admissible
    /// parameter range; only meant for tests and diagnostics.
    pub fn specular_stub(theta: TemperatureField) -> Self {
        WallModel::Maxwell {
            beta: BoundaryField::Constant(0.0),
            theta,
        }
    }

    /// Pure diffuse reflection, i.e. CL with `r_perp = r_par = 1`.
    pub fn diffuse(theta: TemperatureField) -> Result<Self> {
        Self::cercignani_lampis(1.0, 1.0, theta)
    }

    pub fn theta(&self) -> &TemperatureField {
        match self {
            WallModel::CercignaniLampis { theta, .. } | WallModel::Maxwell { theta, .. } => theta,
        }
    }

    /// Lower bound `beta0` of the Maxwell accommodation; `None` in CL mode.
    pub fn beta0(&self) -> Option<f64> {
        match self {
            WallModel::Maxwell { beta, .. } => Some(beta.inf()),
            WallModel::CercignaniLampis { .. } => None,
        }
    }

    /// Density part of `R(u -> v; x)`: the full CL kernel, or
    /// `beta(x) M(x, v)` for Maxwell (the specular part is a Dirac mass and
    /// has no density).
    pub fn density(&self, dim: usize, x: &Vec3, n: &Vec3, u: &Vec3, v: &Vec3) -> f64 {
        match self {
            WallModel::CercignaniLampis {
                r_perp,
                r_par,
                theta,
            } => cl_density(dim, n, theta.at(x), *r_perp, *r_par, u, v),
            WallModel::Maxwell { beta, theta } => beta.at(x) * wall_maxwellian(dim, theta.at(x), v),
        }
    }

    /// Draws a reflected velocity for a particle hitting `x` with velocity `u`.
    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, x: &Vec3, n: &Vec3, u: &Vec3, rng: &mut R) -> Vec3 {
        match self {
            WallModel::CercignaniLampis {
                r_perp,
                r_par,
                theta,
            } => cl_sample(dim, n, theta.at(x), *r_perp, *r_par, u, rng),
            WallModel::Maxwell { beta, theta } => {
                maxwell_sample(dim, n, theta.at(x), beta.at(x), u, rng)
            }
        }
    }

    /// Flux integral of the reflection kernel, `int R(u -> v; x) |v . n| dv`,
    /// by product quadrature over the reflected half-space.
    pub fn kernel_normalization_check(&self, domain: &Domain, x: &Vec3, u: &Vec3) -> Result<NormalizationCheck> {
        let n = domain.outward_normal(x)?;
        let dim = domain.dim();
        if u.dot(&n) <= 0.0 {
            return Err(invalid("u", "incoming velocity must satisfy u . n > 0"));
        }
        Ok(match self {
            WallModel::CercignaniLampis {
                r_perp,
                r_par,
                theta,
            } => {
                let th = theta.at(x);
                let window = cl_window(dim, &n, th, *r_perp, *r_par, u);
                let (value, err) = flux_quadrature(dim, &n, &window, 1e-13, |v| {
                    cl_density(dim, &n, th, *r_perp, *r_par, u, v)
                });
                NormalizationCheck {
                    density_part: value,
                    discrete_part: 0.0,
                    total: value,
                    quadrature_error: err,
                }
            }
            WallModel::Maxwell { beta, theta } => {
                let th = theta.at(x);
                let b = beta.at(x);
                let window = cl_window(dim, &n, th, 1.0, 1.0, u);
                let (value, err) = flux_quadrature(dim, &n, &window, 1e-13, |v| {
                    b * wall_maxwellian(dim, th, v)
                });
                // The specular branch maps u to eta_x(u) with the same normal
                // speed, so its flux weight is exactly 1 - beta.
                let discrete = (1.0 - b) * reflect(&n, u).dot(&n).abs() / u.dot(&n).abs();
                NormalizationCheck {
                    density_part: value,
                    discrete_part: discrete,
                    total: value + discrete,
                    quadrature_error: err,
                }
            }
        })
    }
}

fn check_theta(theta: &TemperatureField) -> Result<()> {
    if !theta.is_finite() || !(theta.inf() > 0.0) {
        return Err(invalid("wall.theta", "temperature must be positive on the whole boundary"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationCheck {
    /// Quadrature of the density part of the kernel.
    pub density_part: f64,
    /// Exact weight of the Maxwell specular branch (zero for CL).
    pub discrete_part: f64,
    pub total: f64,
    pub quadrature_error: f64,
}

/// Modified Bessel function `I_0`.
pub fn bessel_i0(y: f64) -> f64 {
    let y = y.abs();
    if y <= 15.0 {
        i0_series(y)
    } else {
        log_bessel_i0(y).exp()
    }
}

/// `ln I_0(y)`, finite for every finite `y`.
pub fn log_bessel_i0(y: f64) -> f64 {
    let y = y.abs();
    if y <= 15.0 {
        return i0_series(y).ln();
    }
    // Scaled asymptotic expansion: I0(y) = e^y / sqrt(2 pi y) * sum a_k.
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        let next = term * (2.0 * kf - 1.0).powi(2) / (8.0 * kf * y);
        if next >= term || next < 1e-17 * sum {
            break;
        }
        term = next;
        sum += term;
    }
    y - 0.5 * (2.0 * std::f64::consts::PI * y).ln() + sum.ln()
}

fn i0_series(y: f64) -> f64 {
    let q = 0.25 * y * y;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..500 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Wall Maxwellian `M(x, v)` at temperature `theta`, normalized so that
/// its flux over the reflected half-space is one.
pub fn wall_maxwellian(dim: usize, theta: f64, v: &Vec3) -> f64 {
    let norm = theta * (2.0 * std::f64::consts::PI * theta).powf(0.5 * (dim as f64 - 1.0));
    (-v.norm_squared() / (2.0 * theta)).exp() / norm
}

/// `ln R(u -> v; x)` for the Cercignani-Lampis kernel.
pub fn cl_log_density(dim: usize, n: &Vec3, theta: f64, r_perp: f64, r_par: f64, u: &Vec3, v: &Vec3) -> f64 {
    let un = u.dot(n);
    let vn = v.dot(n);
    let u_par = u - un * n;
    let v_par = v - vn * n;
    let a_perp = theta * r_perp;
    let a_par = theta * r_par * (2.0 - r_par);
    let keep = (1.0 - r_perp).max(0.0);
    let bessel_arg = keep.sqrt() * (un * vn).abs() / a_perp;
    -(a_perp).ln() - 0.5 * (dim as f64 - 1.0) * (2.0 * std::f64::consts::PI * a_par).ln()
        - vn * vn / (2.0 * a_perp)
        - keep * un * un / (2.0 * a_perp)
        + log_bessel_i0(bessel_arg)
        - (v_par - (1.0 - r_par) * u_par).norm_squared() / (2.0 * a_par)
}

/// Cercignani-Lampis kernel `R(u -> v; x)`, evaluated in log space.
pub fn cl_density(dim: usize, n: &Vec3, theta: f64, r_perp: f64, r_par: f64, u: &Vec3, v: &Vec3) -> f64 {
    if u.dot(n) <= 0.0 || v.dot(n) >= 0.0 {
        return 0.0;
    }
    cl_log_density(dim, n, theta, r_perp, r_par, u, v).exp()
}

/// Samples the CL reflection law: the normal speed is Rice distributed,
/// drawn as the modulus of a 2D Gaussian, and the tangential part is an
/// isotropic Gaussian centred at `(1 - r_par) u_par`.
pub fn cl_sample<R: Rng + ?Sized>(
    dim: usize,
    n: &Vec3,
    theta: f64,
    r_perp: f64,
    r_par: f64,
    u: &Vec3,
    rng: &mut R,
) -> Vec3 {
    let un = u.dot(n);
    let u_par = u - un * n;
    let sd_perp = (theta * r_perp).sqrt();
    let shift = (1.0 - r_perp).max(0.0).sqrt() * un.abs();
    let y1 = shift + sd_perp * rng.sample::<f64, _>(StandardNormal);
    let y2 = sd_perp * rng.sample::<f64, _>(StandardNormal);
    let speed = y1.hypot(y2);
    let sd_par = (theta * r_par * (2.0 - r_par)).sqrt();
    let mut v = -speed * n + (1.0 - r_par) * u_par;
    let basis = tangent_basis(n, dim);
    for t in basis.iter().take(dim - 1) {
        v += sd_par * rng.sample::<f64, _>(StandardNormal) * t;
    }
    v
}

/// Flux-weighted wall Maxwellian at temperature `theta`.
pub fn diffuse_sample<R: Rng + ?Sized>(dim: usize, n: &Vec3, theta: f64, rng: &mut R) -> Vec3 {
    let e: f64 = rng.sample(rand_distr::Exp1);
    let speed = (2.0 * theta * e).sqrt();
    let mut v = -speed * n;
    let sd = theta.sqrt();
    for t in tangent_basis(n, dim).iter().take(dim - 1) {
        v += sd * rng.sample::<f64, _>(StandardNormal) * t;
    }
    v
}

/// Maxwell reflection: diffuse with probability `beta`, specular otherwise.
pub fn maxwell_sample<R: Rng + ?Sized>(dim: usize, n: &Vec3, theta: f64, beta: f64, u: &Vec3, rng: &mut R) -> Vec3 {
    if beta >= 1.0 || (beta > 0.0 && rng.gen::<f64>() < beta) {
        diffuse_sample(dim, n, theta, rng)
    } else {
        reflect(n, u)
    }
}

/// Integration window for reflected velocities in the `(normal speed,
/// tangential coordinates)` parametrisation `v = -s n + sum_j w_j t_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxWindow {
    pub speed: (f64, f64),
    pub tangential: Vec<(f64, f64)>,
}

/// Window covering `TRUNCATION_WIDTHS` standard deviations of the CL
/// reflection law in every direction.
pub fn cl_window(dim: usize, n: &Vec3, theta: f64, r_perp: f64, r_par: f64, u: &Vec3) -> FluxWindow {
    let un = u.dot(n);
    let u_par = u - un * n;
    let sd_perp = (theta * r_perp).sqrt();
    let shift = (1.0 - r_perp).max(0.0).sqrt() * un.abs();
    let w = TRUNCATION_WIDTHS;
    let speed = ((shift - w * sd_perp).max(0.0), shift + w * sd_perp);
    let sd_par = (theta * r_par * (2.0 - r_par)).sqrt();
    let tangential = tangent_basis(n, dim)
        .iter()
        .take(dim - 1)
        .map(|t| {
            let m = (1.0 - r_par) * u_par.dot(t);
            (m - w * sd_par, m + w * sd_par)
        })
        .collect();
    FluxWindow { speed, tangential }
}

/// `int_window f(v) |v . n| dv` over reflected velocities.
pub fn flux_quadrature<F: FnMut(&Vec3) -> f64>(
    dim: usize,
    n: &Vec3,
    window: &FluxWindow,
    rel_tol: f64,
    mut f: F,
) -> (f64, f64) {
    let basis = tangent_basis(n, dim);
    let mut ranges = vec![window.speed];
    ranges.extend(window.tangential.iter().cloned());
    let max_panels = if dim == 2 { 256 } else { 32 };
    quad::product_quadrature(&ranges, rel_tol, max_panels, |p| {
        let mut v = -p[0] * n;
        for (k, t) in basis.iter().take(dim - 1).enumerate() {
            v += p[k + 1] * t;
        }
        f(&v) * p[0]
    })
}
