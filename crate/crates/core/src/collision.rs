//! Collision mechanism: a bounded rate field `sigma(x)` and a post-collision
//! velocity law, so that `k(x, v, v') = sigma(x) * law(x, v')`.

use std::path::Path;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Vec3;
use crate::quad;

pub const DEFAULT_DELTA_K: f64 = 0.25;

/// Collision rate as a function of position.
#[derive(Debug, Clone, PartialEq)]
pub enum RateField {
    Constant(f64),
    /// `sigma_inf` outside the ball `B(center, radius)`, zero inside.
    Hole { sigma_inf: f64, center: Vec3, radius: f64 },
    /// Hole with a smooth transition of the given width outside the ball.
    Smooth { sigma_inf: f64, center: Vec3, radius: f64, width: f64 },
    /// Piecewise constant on the spatial cells of a relaxation table.
    Tabulated { grid: CartesianGrid, values: Vec<f64> },
}

impl RateField {
    pub fn hole(sigma_inf: f64, center: Vec3, radius: f64) -> Result<Self> {
        if !(sigma_inf >= 0.0 && sigma_inf.is_finite()) {
            return Err(invalid("collision.sigma.value", "rate bound must be finite and nonnegative"));
        }
        if !(radius > 0.0) {
            return Err(invalid("collision.sigma.hole_radius", "must be positive"));
        }
        Ok(RateField::Hole {
            sigma_inf,
            center,
            radius,
        })
    }

    pub fn at(&self, x: &Vec3) -> f64 {
        match self {
            RateField::Constant(s) => *s,
            RateField::Hole {
                sigma_inf,
                center,
                radius,
            } => {
                if (x - center).norm() < *radius {
                    0.0
                } else {
                    *sigma_inf
                }
            }
            RateField::Smooth {
                sigma_inf,
                center,
                radius,
                width,
            } => sigma_inf * smooth_step(((x - center).norm() - radius) / width),
            RateField::Tabulated { grid, values } => values[grid.locate(x)],
        }
    }

    /// The bound `sigma_inf >= sigma(x)`.
    pub fn sup(&self) -> f64 {
        match self {
            RateField::Constant(s) => *s,
            RateField::Hole { sigma_inf, .. } | RateField::Smooth { sigma_inf, .. } => *sigma_inf,
            RateField::Tabulated { values, .. } => values.iter().cloned().fold(0.0, f64::max),
        }
    }

    /// Uniform lower bound `sigma_0` over space (zero when the field vanishes
    /// somewhere).
    pub fn inf(&self) -> f64 {
        match self {
            RateField::Constant(s) => *s,
            RateField::Hole { .. } | RateField::Smooth { .. } => 0.0,
            RateField::Tabulated { values, .. } => values.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn has_closed_form_path_integral(&self) -> bool {
        matches!(self, RateField::Constant(_) | RateField::Hole { .. })
    }

    /// `int_0^t sigma(x + s v) ds`. Exact for the constant and hole fields,
    /// adaptive quadrature otherwise.
    pub fn path_integral(&self, x: &Vec3, v: &Vec3, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            RateField::Constant(s) => s * t,
            RateField::Hole {
                sigma_inf,
                center,
                radius,
            } => sigma_inf * (t - ball_dwell(x, v, t, center, *radius)),
            _ => {
                quad::integrate(|s| self.at(&(x + s * v)), 0.0, t, 1e-11 * (1.0 + self.sup() * t), 40).0
            }
        }
    }

    /// Thinning: proposes times at rate `sup()` along the ray from `x` and
    /// accepts each with probability `sigma / sup()`. Returns the first
    /// accepted time strictly before `horizon`.
    pub fn next_collision<R: Rng + ?Sized>(&self, x: &Vec3, v: &Vec3, horizon: f64, rng: &mut R) -> Option<(f64, Vec3)> {
        let bound = self.sup();
        if bound <= 0.0 {
            return None;
        }
        let exact = matches!(self, RateField::Constant(_));
        let mut t = 0.0;
        loop {
            let e: f64 = rng.sample(Exp1);
            t += e / bound;
            if t >= horizon {
                return None;
            }
            let y = x + t * v;
            if exact || rng.gen::<f64>() * bound < self.at(&y) {
                return Some((t, y));
            }
        }
    }
}

/// Time spent by `x + s v`, `s in [0, t]`, inside the ball `B(center, radius)`.
pub fn ball_dwell(x: &Vec3, v: &Vec3, t: f64, center: &Vec3, radius: f64) -> f64 {
    let p = x - center;
    let a = v.norm_squared();
    if a == 0.0 {
        return if p.norm() < radius { t } else { 0.0 };
    }
    let b = p.dot(v);
    let c = p.norm_squared() - radius * radius;
    let disc = b * b - a * c;
    if disc <= 0.0 {
        return 0.0;
    }
    let sq = disc.sqrt();
    let (s1, s2) = if b >= 0.0 {
        let q = -(b + sq);
        (q / a, c / q)
    } else {
        let q = -b + sq;
        (c / q, q / a)
    };
    let (lo, hi) = (s1.min(s2).max(0.0), s1.max(s2).min(t));
    (hi - lo).max(0.0)
}

fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

/// Axis-aligned Cartesian grid on `[-half_width, half_width]^dim` with
/// `cells` cells per axis. Points outside are clamped to the border cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartesianGrid {
    pub dim: usize,
    pub half_width: f64,
    pub cells: usize,
}

impl CartesianGrid {
    pub fn len(&self) -> usize {
        self.cells.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.cells == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.cells as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn locate(&self, x: &Vec3) -> usize {
        let h = self.spacing();
        let mut idx = 0;
        for k in (0..self.dim).rev() {
            let i = ((x[k] + self.half_width) / h).floor();
            let i = (i.max(0.0) as usize).min(self.cells - 1);
            idx = idx * self.cells + i;
        }
        idx
    }

    /// Lower corner of cell `idx`.
    pub fn corner(&self, mut idx: usize) -> Vec3 {
        let h = self.spacing();
        let mut c = Vec3::zeros();
        for k in 0..self.dim {
            c[k] = -self.half_width + (idx % self.cells) as f64 * h;
            idx /= self.cells;
        }
        c
    }

    pub fn center(&self, idx: usize) -> Vec3 {
        let h = self.spacing();
        let mut c = self.corner(idx);
        for k in 0..self.dim {
            c[k] += 0.5 * h;
        }
        c
    }
}

/// Tabulated equilibrium `f_A(x, v')`: one velocity table per spatial cell.
/// The mass of each table is the local collision rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationTable {
    pub spatial: CartesianGrid,
    pub velocity: CartesianGrid,
    /// `values[cell][vcell]`, density values (not masses).
    pub values: Vec<Vec<f64>>,
    cumulative: Vec<Vec<f64>>,
    rates: Vec<f64>,
}

impl RelaxationTable {
    pub fn new(spatial: CartesianGrid, velocity: CartesianGrid, values: Vec<Vec<f64>>) -> Result<Self> {
        if spatial.dim != velocity.dim {
            return Err(Error::Table("spatial and velocity grids differ in dimension".into()));
        }
        if values.len() != spatial.len() {
            return Err(Error::Table(format!(
                "expected {} spatial cells, found {}",
                spatial.len(),
                values.len()
            )));
        }
        let vol = velocity.cell_volume();
        let mut cumulative = Vec::with_capacity(values.len());
        let mut rates = Vec::with_capacity(values.len());
        for (i, row) in values.iter().enumerate() {
            if row.len() != velocity.len() {
                return Err(Error::Table(format!(
                    "cell {i}: expected {} velocity values, found {}",
                    velocity.len(),
                    row.len()
                )));
            }
            if row.iter().any(|&f| !(f >= 0.0 && f.is_finite())) {
                return Err(Error::Table(format!("cell {i}: values must be finite and nonnegative")));
            }
            let mut acc = 0.0;
            let cum: Vec<f64> = row
                .iter()
                .map(|f| {
                    acc += f * vol;
                    acc
                })
                .collect();
            rates.push(acc);
            cumulative.push(cum);
        }
        Ok(RelaxationTable {
            spatial,
            velocity,
            values,
            cumulative,
            rates,
        })
    }

    /// Tabulates `f(x_center, v_center)` on both grids.
    pub fn from_fn<F: Fn(&Vec3, &Vec3) -> f64>(spatial: CartesianGrid, velocity: CartesianGrid, f: F) -> Result<Self> {
        let values = (0..spatial.len())
            .map(|i| {
                let x = spatial.center(i);
                (0..velocity.len()).map(|j| f(&x, &velocity.center(j))).collect()
            })
            .collect();
        Self::new(spatial, velocity, values)
    }

    /// Reads rows `cell_index, value_0, ..., value_{m-1}` (header optional).
    pub fn read_csv(path: &Path, spatial: CartesianGrid, velocity: CartesianGrid) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .from_path(path)?;
        let mut values = vec![None; spatial.len()];
        for record in reader.records() {
            let record = record?;
            let first = record.get(0).unwrap_or("").trim();
            let Ok(cell) = first.parse::<usize>() else {
                if values.iter().all(Option::is_none) {
                    continue;
                }
                return Err(Error::Table(format!("bad cell index `{first}`")));
            };
            if cell >= values.len() {
                return Err(Error::Table(format!("cell index {cell} out of range")));
            }
            let row = record
                .iter()
                .skip(1)
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Table(format!("cell {cell}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            values[cell] = Some(row);
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.ok_or_else(|| Error::Table(format!("missing row for cell {i}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(spatial, velocity, values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
        for (i, row) in self.values.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-cell rates `sigma = int f_A dv'`.
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn rate_field(&self) -> RateField {
        RateField::Tabulated {
            grid: self.spatial.clone(),
            values: self.rates.clone(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &Vec3, rng: &mut R) -> Vec3 {
        let cell = self.spatial.locate(x);
        let cum = &self.cumulative[cell];
        let total = *cum.last().unwrap_or(&0.0);
        let target = rng.gen::<f64>() * total;
        let j = cum.partition_point(|&c| c <= target).min(cum.len() - 1);
        let h = self.velocity.spacing();
        let mut v = self.velocity.corner(j);
        for k in 0..self.velocity.dim {
            v[k] += h * rng.gen::<f64>();
        }
        v
    }
}

/// Post-collision velocity law `law(x, v')`, a probability density in `v'`.
#[derive(Debug, Clone, PartialEq)]
pub enum PostCollisionLaw {
    /// Unit Maxwellian `M_1(v') = exp(-|v'|^2/2) / (2 pi)^{d/2}`.
    Bgk,
    /// Uniform on the annulus `a <= |v'| <= b`.
    Annulus { a: f64, b: f64 },
    Relaxation(Box<RelaxationTable>),
}

impl PostCollisionLaw {
    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, x: &Vec3, rng: &mut R) -> Vec3 {
        match self {
            PostCollisionLaw::Bgk => {
                let mut v = Vec3::zeros();
                for k in 0..dim {
                    v[k] = rng.sample(StandardNormal);
                }
                v
            }
            PostCollisionLaw::Annulus { a, b } => {
                let d = dim as f64;
                let u: f64 = rng.gen();
                let r = (a.powf(d) + u * (b.powf(d) - a.powf(d))).powf(1.0 / d);
                let mut dir = Vec3::zeros();
                loop {
                    for k in 0..dim {
                        dir[k] = rng.sample(StandardNormal);
                    }
                    let n = dir.norm();
                    if n > 1e-12 {
                        return dir * (r / n);
                    }
                }
            }
            PostCollisionLaw::Relaxation(table) => table.sample(x, rng),
        }
    }

    /// Density of the normalized law at `v'` for a point `x`.
    pub fn density(&self, dim: usize, x: &Vec3, v: &Vec3) -> f64 {
        match self {
            PostCollisionLaw::Bgk => {
                (-0.5 * v.norm_squared()).exp() / (2.0 * std::f64::consts::PI).powf(0.5 * dim as f64)
            }
            PostCollisionLaw::Annulus { a, b } => {
                let r = v.norm();
                if r < *a || r > *b {
                    0.0
                } else {
                    1.0 / annulus_volume(dim, *a, *b)
                }
            }
            PostCollisionLaw::Relaxation(table) => {
                let cell = table.spatial.locate(x);
                let rate = table.rates[cell];
                let g = &table.velocity;
                let inside = (0..dim).all(|k| v[k].abs() <= g.half_width);
                if rate <= 0.0 || !inside {
                    0.0
                } else {
                    table.values[cell][g.locate(v)] / rate
                }
            }
        }
    }

    /// `E |V|^p` under the law at `x`.
    pub fn speed_moment(&self, dim: usize, x: &Vec3, p: f64) -> f64 {
        match self {
            PostCollisionLaw::Bgk => {
                let surface = sphere_area(dim);
                let norm = (2.0 * std::f64::consts::PI).powf(0.5 * dim as f64);
                quad::integrate(
                    |r| r.powf(p + dim as f64 - 1.0) * (-0.5 * r * r).exp(),
                    0.0,
                    40.0,
                    1e-13,
                    40,
                )
                .0 * surface
                    / norm
            }
            PostCollisionLaw::Annulus { a, b } => {
                let d = dim as f64;
                let num = (b.powf(p + d) - a.powf(p + d)) / (p + d);
                let den = (b.powf(d) - a.powf(d)) / d;
                num / den
            }
            PostCollisionLaw::Relaxation(table) => {
                let cell = table.spatial.locate(x);
                let rate = table.rates[cell];
                if rate <= 0.0 {
                    return 0.0;
                }
                let vol = table.velocity.cell_volume();
                table.values[cell]
                    .iter()
                    .enumerate()
                    .map(|(j, f)| f * vol * table.velocity.center(j).norm().powf(p))
                    .sum::<f64>()
                    / rate
            }
        }
    }

    /// Largest value of the law's density.
    fn density_sup(&self, dim: usize) -> f64 {
        match self {
            PostCollisionLaw::Bgk => (2.0 * std::f64::consts::PI).powf(-0.5 * dim as f64),
            PostCollisionLaw::Annulus { a, b } => 1.0 / annulus_volume(dim, *a, *b),
            PostCollisionLaw::Relaxation(_) => f64::NAN,
        }
    }
}

pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => f64::NAN,
    }
}

fn annulus_volume(dim: usize, a: f64, b: f64) -> f64 {
    sphere_area(dim) * (b.powi(dim as i32) - a.powi(dim as i32)) / dim as f64
}

/// Complete collision model with its certified constants.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionModel {
    pub rate: RateField,
    pub law: PostCollisionLaw,
    pub dim: usize,
    pub delta_k: f64,
    /// Certified `sup_x int k(x, v, v') |v'|^{2 delta_k} dv'`.
    pub moment_bound: f64,
    /// `sup k(x, v, v')`. Recorded for reports only.
    pub k_inf: f64,
}

impl CollisionModel {
    pub fn new(rate: RateField, law: PostCollisionLaw, dim: usize, delta_k: f64) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(invalid("dim", "only d = 2 and d = 3 are supported"));
        }
        if !(delta_k > 0.0 && delta_k < 0.5) {
            return Err(invalid("weights.delta_k", format!("{delta_k} not in (0, 1/2)")));
        }
        if rate.sup() < 0.0 || !rate.sup().is_finite() || rate.inf() < 0.0 {
            return Err(invalid("collision.sigma", "rate must be finite and nonnegative"));
        }
        match &law {
            PostCollisionLaw::Annulus { a, b } if !(*a >= 0.0 && b > a && b.is_finite()) => {
                return Err(invalid("collision.annulus", format!("need 0 <= a < b, got a={a}, b={b}")));
            }
            PostCollisionLaw::Relaxation(t) if t.spatial.dim != dim => {
                return Err(invalid("collision.table", "table dimension differs from the domain"));
            }
            _ => {}
        }
        let k_inf = match &law {
            PostCollisionLaw::Relaxation(t) => t.values.iter().flatten().cloned().fold(0.0, f64::max),
            other => rate.sup() * other.density_sup(dim),
        };
        let mut model = CollisionModel {
            rate,
            law,
            dim,
            delta_k,
            moment_bound: 0.0,
            k_inf,
        };
        model.moment_bound = model.moment_bound_check()?;
        Ok(model)
    }

    pub fn bgk(rate: RateField, dim: usize) -> Result<Self> {
        Self::new(rate, PostCollisionLaw::Bgk, dim, DEFAULT_DELTA_K)
    }

    pub fn relaxation(table: RelaxationTable, delta_k: f64) -> Result<Self> {
        let dim = table.spatial.dim;
        let rate = table.rate_field();
        Self::new(rate, PostCollisionLaw::Relaxation(Box::new(table)), dim, delta_k)
    }

    pub fn sigma(&self, x: &Vec3) -> f64 {
        self.rate.at(x)
    }

    pub fn sigma_inf(&self) -> f64 {
        self.rate.sup()
    }

    pub fn next_collision<R: Rng + ?Sized>(&self, x: &Vec3, v: &Vec3, horizon: f64, rng: &mut R) -> Option<(f64, Vec3)> {
        self.rate.next_collision(x, v, horizon, rng)
    }

    /// Draws `v'` from `k(x, v, .) / sigma(x)`. The law does not depend on
    /// the pre-collision velocity for the provided presets.
    pub fn gain_sample<R: Rng + ?Sized>(&self, x: &Vec3, _v: &Vec3, rng: &mut R) -> Vec3 {
        debug_assert!(self.rate.at(x) > 0.0, "collision requested where the rate vanishes");
        self.law.sample(self.dim, x, rng)
    }

    /// `k(x, v, v')`.
    pub fn kernel(&self, x: &Vec3, _v: &Vec3, v_post: &Vec3) -> f64 {
        self.rate.at(x) * self.law.density(self.dim, x, v_post)
    }

    /// Supremum over a spatial sample of `sigma(x) E|V'|^{2 delta_k}`.
    pub fn moment_bound_check(&self) -> Result<f64> {
        let p = 2.0 * self.delta_k;
        let points: Vec<Vec3> = match (&self.rate, &self.law) {
            (_, PostCollisionLaw::Relaxation(t)) => (0..t.spatial.len()).map(|i| t.spatial.center(i)).collect(),
            (RateField::Tabulated { grid, .. }, _) => (0..grid.len()).map(|i| grid.center(i)).collect(),
            _ => vec![Vec3::zeros()],
        };
        let sigma_for = |x: &Vec3| match (&self.rate, &self.law) {
            (RateField::Tabulated { .. }, _) | (_, PostCollisionLaw::Relaxation(_)) => self.rate.at(x),
            _ => self.rate.sup(),
        };
        let mut best: f64 = 0.0;
        for x in &points {
            let s = sigma_for(x);
            if s == 0.0 {
                continue;
            }
            let m = s * self.law.speed_moment(self.dim, x, p);
            if !m.is_finite() {
                return Err(Error::MomentBound(format!("moment of order {p} diverges at {x:?}")));
            }
            best = best.max(m);
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v2(x: f64, y: f64) -> Vec3 {
        Vec3::new(x, y, 0.0)
    }

    fn unit_hole() -> RateField {
        RateField::hole(1.0, Vec3::zeros(), 1.0).unwrap()
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(RateField::Constant(1.0).at(&v2(0.3, 0.2)), 1.0);
        assert_eq!(unit_hole().at(&Vec3::zeros()), 0.0);
        assert_eq!(unit_hole().at(&v2(1.5, 0.0)), 1.0);
    }

    #[test]
    fn hole_path_integral_matches_quadrature() {
        let f = unit_hole();
        let x = v2(-2.5, 0.3);
        let v = v2(1.0, 0.05);
        for t in [0.5, 1.0, 2.0, 3.0, 4.5] {
            let exact = f.path_integral(&x, &v, t);
            let q = quad::integrate(|s| f.at(&(x + s * v)), 0.0, t, 1e-12, 50).0;
            assert!((exact - q).abs() < 1e-9, "t={t}: {exact} vs {q}");
        }
        // Straight through the centre: chord length 2 at unit speed.
        let through = f.path_integral(&v2(-2.0, 0.0), &v2(1.0, 0.0), 4.0);
        assert!((through - 2.0).abs() < 1e-14);
    }

    #[test]
    fn thinning_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zero = RateField::Constant(0.0);
        assert!((0..100).all(|_| zero.next_collision(&Vec3::zeros(), &v2(1.0, 0.0), 10.0, &mut rng).is_none()));
        let c = RateField::Constant(2.0);
        let n = 100_000;
        let times: Vec<f64> = (0..n)
            .map(|_| c.next_collision(&Vec3::zeros(), &v2(1.0, 0.0), f64::INFINITY, &mut rng).unwrap().0)
            .collect();
        let mean = times.iter().sum::<f64>() / n as f64;
        let se = 0.5 / (n as f64).sqrt();
        assert!((mean - 0.5).abs() < 4.0 * se, "{mean}");
    }

    #[test]
    fn hole_survival_matches_path_integral() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = unit_hole();
        let x = v2(-2.0, 0.2);
        let v = v2(1.0, 0.0);
        let t = 3.0;
        let trials = 1_000_000;
        let survived = (0..trials).filter(|_| f.next_collision(&x, &v, t, &mut rng).is_none()).count() as f64;
        let p = (-f.path_integral(&x, &v, t)).exp();
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((survived / trials as f64 - p).abs() < 4.0 * se);
    }

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }

    #[test]
    fn bgk_moments() {
        let model = CollisionModel::bgk(RateField::Constant(1.0), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws: Vec<Vec3> = (0..1_000_000).map(|_| model.gain_sample(&Vec3::zeros(), &Vec3::zeros(), &mut rng)).collect();
        for k in 0..2 {
            let (m, se) = mean_se(&draws.iter().map(|v| v[k]).collect::<Vec<_>>());
            assert!(m.abs() < 4.0 * se);
            let (m2, se2) = mean_se(&draws.iter().map(|v| v[k] * v[k]).collect::<Vec<_>>());
            assert!((m2 - 1.0).abs() < 4.0 * se2);
        }
        let (c, sec) = mean_se(&draws.iter().map(|v| v[0] * v[1]).collect::<Vec<_>>());
        assert!(c.abs() < 4.0 * sec);
        assert!(draws.iter().all(|v| v.z == 0.0));
    }

    #[test]
    fn annulus_second_moment() {
        let law = PostCollisionLaw::Annulus { a: 1.0, b: 2.0 };
        let q = quad::integrate(|r| r * r * 2.0 * std::f64::consts::PI * r, 1.0, 2.0, 1e-14, 30).0 / (3.0 * std::f64::consts::PI);
        assert!((q - 2.5).abs() < 1e-12);
        assert!((law.speed_moment(2, &Vec3::zeros(), 2.0) - 2.5).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s: Vec<f64> = (0..1_000_000).map(|_| law.sample(2, &Vec3::zeros(), &mut rng).norm_squared()).collect();
        let (m, se) = mean_se(&s);
        assert!((m - 2.5).abs() < 4.0 * se, "{m}");
    }

    #[test]
    fn moment_bound_examples() {
        let bgk = CollisionModel::bgk(RateField::Constant(2.0), 2).unwrap();
        let closed = 2f64.powf(0.25) * statrs::function::gamma::gamma(1.25);
        assert!((bgk.moment_bound - 2.0 * closed).abs() < 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mc: Vec<f64> = (0..1_000_000)
            .map(|_| bgk.law.sample(2, &Vec3::zeros(), &mut rng).norm().sqrt())
            .collect();
        let (m, se) = mean_se(&mc);
        assert!((2.0 * m - bgk.moment_bound).abs() < 8.0 * se);

        let zero = CollisionModel::bgk(RateField::Constant(0.0), 2).unwrap();
        assert_eq!(zero.moment_bound, 0.0);

        let ann = CollisionModel::new(RateField::Constant(1.5), PostCollisionLaw::Annulus { a: 1.0, b: 2.0 }, 2, 0.25).unwrap();
        assert!(ann.moment_bound > 1.5 && ann.moment_bound < 1.5 * 2f64.sqrt());
        assert!(CollisionModel::new(RateField::Constant(1.0), PostCollisionLaw::Bgk, 2, 0.5).is_err());
    }

    #[test]
    fn laws_are_normalized() {
        for dim in [2usize, 3] {
            let w = 8.0;
            let ranges = vec![(-w, w); dim];
            for law in [PostCollisionLaw::Bgk, PostCollisionLaw::Annulus { a: 0.5, b: 2.0 }] {
                let panels = if dim == 2 { 128 } else { 32 };
                let (mass, _) = quad::product_quadrature(&ranges, 1e-6, panels, |p| {
                    let v = Vec3::new(p[0], p[1], if dim == 3 { p[2] } else { 0.0 });
                    law.density(dim, &Vec3::zeros(), &v)
                });
                assert!((mass - 1.0).abs() < 2e-3, "dim={dim} {law:?}: {mass}");
            }
        }
    }

    fn maxwellian_table() -> RelaxationTable {
        let s = CartesianGrid { dim: 2, half_width: 1.0, cells: 2 };
        let v = CartesianGrid { dim: 2, half_width: 6.0, cells: 48 };
        RelaxationTable::from_fn(s, v, |_, v| PostCollisionLaw::Bgk.density(2, &Vec3::zeros(), v)).unwrap()
    }

    #[test]
    fn relaxation_with_maxwellian_table_matches_bgk() {
        let table = maxwellian_table();
        for r in table.rates() {
            assert!((r - 1.0).abs() < 1e-3);
        }
        let model = CollisionModel::relaxation(table, 0.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 200_000;
        let bins = 12;
        let edge = |s: f64| ((s / 0.4) as usize).min(bins - 1);
        let mut a = vec![0.0; bins];
        let mut b = vec![0.0; bins];
        for _ in 0..n {
            a[edge(model.gain_sample(&v2(0.3, -0.2), &Vec3::zeros(), &mut rng).norm())] += 1.0;
            b[edge(PostCollisionLaw::Bgk.sample(2, &Vec3::zeros(), &mut rng).norm())] += 1.0;
        }
        let stat: f64 = a
            .iter()
            .zip(&b)
            .filter(|(x, y)| *x + *y > 0.0)
            .map(|(x, y)| (x - y) * (x - y) / (x + y))
            .sum();
        let used = a.iter().zip(&b).filter(|(x, y)| *x + *y > 0.0).count();
        let chi = statrs::distribution::ChiSquared::new((used - 1) as f64).unwrap();
        let p = 1.0 - statrs::distribution::ContinuousCDF::cdf(&chi, stat);
        assert!(p > 0.01, "p={p}");
    }

    #[test]
    fn relaxation_csv_round_trip() {
        let table = maxwellian_table();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        table.write_csv(&path).unwrap();
        let back = RelaxationTable::read_csv(&path, table.spatial.clone(), table.velocity.clone()).unwrap();
        for (r, s) in table.values.iter().flatten().zip(back.values.iter().flatten()) {
            assert!((r - s).abs() <= 1e-15 * r.abs());
        }
        let bad = RelaxationTable::new(table.spatial.clone(), table.velocity.clone(), vec![vec![0.0; 3]]);
        assert!(bad.is_err());
    }

    #[test]
    fn grid_locate_and_center_agree() {
        let g = CartesianGrid { dim: 3, half_width: 2.0, cells: 5 };
        for i in 0..g.len() {
            assert_eq!(g.locate(&g.center(i)), i);
        }
        assert_eq!(g.locate(&Vec3::new(-10.0, -10.0, -10.0)), 0);
    }

    #[test]
    fn smooth_field_bounds() {
        let f = RateField::Smooth { sigma_inf: 2.0, center: Vec3::zeros(), radius: 1.0, width: 0.5 };
        assert_eq!(f.at(&Vec3::zeros()), 0.0);
        assert_eq!(f.at(&v2(1.6, 0.0)), 2.0);
        let mid = f.at(&v2(1.25, 0.0));
        assert!((mid - 1.0).abs() < 1e-12);
        let pi = f.path_integral(&v2(-2.0, 0.0), &v2(1.0, 0.0), 4.0);
        // Full-rate stretches of total length 1 plus two symmetric layers of weight 0.25.
        assert!((pi - 2.0 * (4.0 - 2.0 - 0.5)).abs() < 1e-8, "{pi}");
    }
}
