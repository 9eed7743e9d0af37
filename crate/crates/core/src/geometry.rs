//! Ray geometry of the bounded spatial domain.
//!
//! Positions and velocities are stored as `Vec3`; two-dimensional domains
//! keep the third component at zero.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::quad;

pub type Vec3 = nalgebra::Vector3<f64>;

/// Relative tolerance used to decide whether a point lies on the boundary.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Convex, centrally star-shaped level sets `phi(x) < 0` used by the
/// implicit 2D domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevelSetPreset {
    /// `(|x|/a)^p + (|y|/a)^p - 1`, convex for `p >= 1`.
    Superellipse { exponent: f64, scale: f64 },
}

impl LevelSetPreset {
    pub fn value(&self, x: &Vec3) -> f64 {
        match *self {
            LevelSetPreset::Superellipse { exponent, scale } => {
                (x.x.abs() / scale).powf(exponent) + (x.y.abs() / scale).powf(exponent) - 1.0
            }
        }
    }

    pub fn gradient(&self, x: &Vec3) -> Vec3 {
        match *self {
            LevelSetPreset::Superellipse { exponent, scale } => {
                let g = |c: f64| {
                    exponent / scale * (c.abs() / scale).powf(exponent - 1.0) * c.signum()
                };
                Vec3::new(g(x.x), g(x.y), 0.0)
            }
        }
    }

    /// A radius guaranteed to enclose the zero level set.
    fn radius_upper_bound(&self) -> f64 {
        match *self {
            LevelSetPreset::Superellipse { scale, .. } => scale * std::f64::consts::SQRT_2 * 1.01,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            LevelSetPreset::Superellipse { exponent, scale } => {
                if !(exponent >= 2.0 && exponent.is_finite()) {
                    return Err(invalid("geometry.exponent", "superellipse exponent must be >= 2"));
                }
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(invalid("geometry.scale", "scale must be positive"));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Disk { radius: f64 },
    Ball { radius: f64 },
    Implicit2d {
        preset: LevelSetPreset,
        /// Largest disk around the origin contained in the domain.
        inner_radius: f64,
        /// Smallest disk around the origin containing the domain.
        bounding_radius: f64,
    },
}

/// Region of phase space a state belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseRegion {
    Interior,
    /// Boundary point with `v . n > 0`.
    Outgoing,
    /// Boundary point with `v . n < 0`.
    Incoming,
    /// Boundary point with `v . n = 0`.
    Grazing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseState {
    pub x: Vec3,
    pub v: Vec3,
}

impl PhaseState {
    pub fn new(x: Vec3, v: Vec3) -> Self {
        Self { x, v }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    shape: Shape,
    diameter: f64,
    volume: f64,
}

impl Domain {
    pub fn disk(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("geometry.radius", "radius must be positive"));
        }
        Ok(Self {
            shape: Shape::Disk { radius },
            diameter: 2.0 * radius,
            volume: std::f64::consts::PI * radius * radius,
        })
    }

    pub fn ball(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("geometry.radius", "radius must be positive"));
        }
        Ok(Self {
            shape: Shape::Ball { radius },
            diameter: 2.0 * radius,
            volume: 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
        })
    }

    pub fn implicit2d(preset: LevelSetPreset) -> Result<Self> {
        preset.validate()?;
        let upper = preset.radius_upper_bound();
        let radial = |theta: f64| radial_root(&preset, theta, upper);

        let n = 2048;
        let samples: Vec<f64> = (0..n)
            .map(|k| radial(2.0 * std::f64::consts::PI * k as f64 / n as f64))
            .collect();
        let min_r = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_r = samples.iter().cloned().fold(0.0, f64::max);

        let (area, _) = quad::integrate(
            |t| 0.5 * radial(t).powi(2),
            0.0,
            2.0 * std::f64::consts::PI,
            1e-11,
            20,
        );
        let diameter = implicit_diameter(&radial);

        Ok(Self {
            shape: Shape::Implicit2d {
                preset,
                inner_radius: min_r * (1.0 - 1e-9),
                bounding_radius: max_r * (1.0 + 1e-9),
            },
            diameter,
            volume: area,
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        match self.shape {
            Shape::Ball { .. } => 3,
            _ => 2,
        }
    }

    /// Radius of the disk/ball, `None` for implicit shapes.
    pub fn radius(&self) -> Option<f64> {
        match self.shape {
            Shape::Disk { radius } | Shape::Ball { radius } => Some(radius),
            Shape::Implicit2d { .. } => None,
        }
    }

    pub fn bounding_radius(&self) -> f64 {
        match self.shape {
            Shape::Disk { radius } | Shape::Ball { radius } => radius,
            Shape::Implicit2d {
                bounding_radius, ..
            } => bounding_radius,
        }
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Lebesgue measure |Omega|.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Membership in the open domain.
    pub fn contains(&self, x: &Vec3) -> bool {
        match &self.shape {
            Shape::Disk { radius } | Shape::Ball { radius } => x.norm_squared() < radius * radius,
            Shape::Implicit2d { preset, .. } => preset.value(x) < 0.0,
        }
    }

    /// Signed distance-like residual of the boundary equation at `x`.
    pub fn boundary_residual(&self, x: &Vec3) -> f64 {
        match &self.shape {
            Shape::Disk { radius } | Shape::Ball { radius } => x.norm() - radius,
            Shape::Implicit2d { preset, .. } => {
                let g = preset.gradient(x).norm();
                if g > 0.0 {
                    preset.value(x) / g
                } else {
                    preset.value(x)
                }
            }
        }
    }

    fn on_boundary(&self, x: &Vec3) -> bool {
        self.boundary_residual(x).abs() <= BOUNDARY_TOL * self.bounding_radius().max(1.0)
    }

    /// Unit outward normal at a boundary point.
    pub fn outward_normal(&self, x: &Vec3) -> Result<Vec3> {
        if !self.on_boundary(x) {
            return Err(Error::NotOnBoundary {
                residual: self.boundary_residual(x),
            });
        }
        Ok(self.normal_unchecked(x))
    }

    /// Outward normal without the boundary-proximity check.
    pub(crate) fn normal_unchecked(&self, x: &Vec3) -> Vec3 {
        match &self.shape {
            Shape::Disk { .. } | Shape::Ball { .. } => x.normalize(),
            Shape::Implicit2d { preset, .. } => preset.gradient(x).normalize(),
        }
    }

    pub fn classify(&self, s: &PhaseState) -> PhaseRegion {
        if !self.on_boundary(&s.x) {
            return PhaseRegion::Interior;
        }
        let vn = s.v.dot(&self.normal_unchecked(&s.x));
        if vn > 0.0 {
            PhaseRegion::Outgoing
        } else if vn < 0.0 {
            PhaseRegion::Incoming
        } else {
            PhaseRegion::Grazing
        }
    }

    /// Forward exit time `tau(x, v)`; zero on the outgoing and grazing parts
    /// of the boundary and `f64::INFINITY` when `v = 0`.
    pub fn exit_time(&self, x: &Vec3, v: &Vec3) -> f64 {
        let a = v.norm_squared();
        if a == 0.0 {
            return f64::INFINITY;
        }
        match &self.shape {
            Shape::Disk { radius } | Shape::Ball { radius } => {
                let b = x.dot(v);
                let c = x.norm_squared() - radius * radius;
                if c >= -4.0 * f64::EPSILON * radius * radius && b >= 0.0 {
                    return 0.0;
                }
                let disc = (b * b - a * c).max(0.0).sqrt();
                let t = if b <= 0.0 { (disc - b) / a } else { -c / (b + disc) };
                t.max(0.0)
            }
            Shape::Implicit2d {
                preset,
                inner_radius,
                bounding_radius,
            } => implicit_exit_time(preset, *inner_radius, *bounding_radius, x, v),
        }
    }

    /// Boundary point `q(x, v) = x + tau(x, v) v`; `None` when `v = 0`.
    pub fn footpoint(&self, x: &Vec3, v: &Vec3) -> Option<Vec3> {
        let t = self.exit_time(x, v);
        t.is_finite().then(|| x + t * v)
    }

    /// Specular reflection `v - 2 (v . n_x) n_x` at a boundary point.
    pub fn specular(&self, x: &Vec3, v: &Vec3) -> Result<Vec3> {
        let n = self.outward_normal(x)?;
        Ok(reflect(&n, v))
    }

    /// Moves a point that drifted off the boundary back onto it.
    pub fn project_to_boundary(&self, x: &Vec3) -> Vec3 {
        match &self.shape {
            Shape::Disk { radius } | Shape::Ball { radius } => {
                let r = x.norm();
                if r == 0.0 {
                    Vec3::new(*radius, 0.0, 0.0)
                } else {
                    x * (radius / r)
                }
            }
            Shape::Implicit2d {
                preset,
                bounding_radius,
                ..
            } => {
                let theta = x.y.atan2(x.x);
                let r = radial_root(preset, theta, *bounding_radius * 1.01);
                Vec3::new(r * theta.cos(), r * theta.sin(), 0.0)
            }
        }
    }

    /// Uniform sample from the domain.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        match &self.shape {
            Shape::Disk { radius } => {
                let r = radius * rng.gen::<f64>().sqrt();
                let a = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
                Vec3::new(r * a.cos(), r * a.sin(), 0.0)
            }
            Shape::Ball { radius } => loop {
                let p = Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                if p.norm_squared() < 1.0 {
                    break p * *radius;
                }
            },
            Shape::Implicit2d {
                bounding_radius, ..
            } => loop {
                let p = Vec3::new(
                    bounding_radius * rng.gen_range(-1.0..1.0),
                    bounding_radius * rng.gen_range(-1.0..1.0),
                    0.0,
                );
                if self.contains(&p) {
                    break p;
                }
            },
        }
    }
}

/// Specular reflection of `v` about the plane with unit normal `n`.
#[inline]
pub fn reflect(n: &Vec3, v: &Vec3) -> Vec3 {
    v - 2.0 * v.dot(n) * n
}

/// Orthonormal basis of the tangent space at a boundary point with unit
/// normal `n` (one vector in 2D, two in 3D).
pub fn tangent_basis(n: &Vec3, dim: usize) -> [Vec3; 2] {
    if dim == 2 {
        [Vec3::new(-n.y, n.x, 0.0), Vec3::zeros()]
    } else {
        let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let t1 = (helper - helper.dot(n) * n).normalize();
        let t2 = n.cross(&t1);
        [t1, t2]
    }
}

fn radial_root(preset: &LevelSetPreset, theta: f64, upper: f64) -> f64 {
    let dir = Vec3::new(theta.cos(), theta.sin(), 0.0);
    let (mut lo, mut hi) = (0.0, upper);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if preset.value(&(dir * mid)) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * upper {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn implicit_diameter(radial: &dyn Fn(f64) -> f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let point = |t: f64| {
        let r = radial(t);
        Vec3::new(r * t.cos(), r * t.sin(), 0.0)
    };
    let n = 720;
    let pts: Vec<Vec3> = (0..n).map(|k| point(two_pi * k as f64 / n as f64)).collect();
    let (mut best, mut bi, mut bj) = (0.0, 0, 0);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (pts[i] - pts[j]).norm();
            if d > best {
                best = d;
                bi = i;
                bj = j;
            }
        }
    }
    // Coordinate ascent on the pair of boundary angles.
    let (mut a, mut b) = (two_pi * bi as f64 / n as f64, two_pi * bj as f64 / n as f64);
    let mut step = two_pi / n as f64;
    while step > 1e-13 {
        let mut improved = false;
        for (da, db) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let d = (point(a + da) - point(b + db)).norm();
            if d > best {
                best = d;
                a += da;
                b += db;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best
}

fn implicit_exit_time(
    preset: &LevelSetPreset,
    inner_radius: f64,
    bounding_radius: f64,
    x: &Vec3,
    v: &Vec3,
) -> f64 {
    let phi = |t: f64| preset.value(&(x + t * v));
    let grad = preset.gradient(x);
    let scale = grad.norm().max(1e-300);
    if preset.value(x) / scale >= -BOUNDARY_TOL * 1e-3 && grad.dot(v) >= 0.0 {
        return 0.0;
    }
    let sphere_exit = |r: f64| {
        let a = v.norm_squared();
        let b = x.dot(v);
        let c = x.norm_squared() - r * r;
        let disc = (b * b - a * c).max(0.0).sqrt();
        if b <= 0.0 {
            (disc - b) / a
        } else {
            -c / (b + disc)
        }
    };
    let mut lo = if x.norm() < inner_radius {
        sphere_exit(inner_radius).max(0.0)
    } else {
        0.0
    };
    let mut hi = sphere_exit(bounding_radius).max(lo);
    // Safeguarded bisection; convexity of the level set gives a single
    // sign change on (lo, hi].
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1e-300) {
            break;
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..2 {
        let p = x + t * v;
        let d = preset.gradient(&p).dot(v);
        if d.abs() > 1e-300 {
            let next = t - preset.value(&p) / d;
            if next >= lo - 1e-12 && next <= hi + 1e-12 {
                t = next;
            }
        }
    }
    t
}
