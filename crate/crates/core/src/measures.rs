//! Phase-space histograms, Lyapunov weights, weighted norms, binned L1
//! distances and decay-rate fits.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{invalid, Error, Result};
use crate::geometry::{Domain, Shape, Vec3};
use crate::wall::WallModel;

pub const DEFAULT_VMAX: f64 = 6.0;
pub const DEFAULT_DELTA: f64 = 0.1;
/// Deposits slower than this are tallied separately from the weighted sums.
pub const SLOW_SPEED_FLOOR: f64 = 1e-9;

/// Spatial partition of the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpatialGrid {
    /// Equal-area rings times equal-angle sectors of a disk.
    Polar { radius: f64, rings: usize, sectors: usize },
    /// Equal-volume shells times equal-area polar bands times azimuthal sectors.
    Spherical { radius: f64, shells: usize, bands: usize, sectors: usize },
    /// Square cells on `[-half_width, half_width]^2` clipped to the domain.
    Clipped { half_width: f64, cells: usize, volumes: Vec<f64> },
}

impl SpatialGrid {
    /// Default partition with roughly `resolution` cells per direction.
    pub fn for_domain(domain: &Domain, resolution: usize) -> Self {
        let n = resolution.max(1);
        match domain.shape() {
            Shape::Disk { radius } => SpatialGrid::Polar {
                radius: *radius,
                rings: n,
                sectors: n,
            },
            Shape::Ball { radius } => SpatialGrid::Spherical {
                radius: *radius,
                shells: n,
                bands: n,
                sectors: n,
            },
            Shape::Implicit2d { .. } => Self::clipped(domain, n),
        }
    }

    /// Cartesian cells clipped to `domain`, volumes from a 32x32 midpoint
    /// subgrid per cell.
    pub fn clipped(domain: &Domain, cells: usize) -> Self {
        let half_width = domain.bounding_radius();
        let h = 2.0 * half_width / cells as f64;
        let sub = 32;
        let mut volumes = Vec::with_capacity(cells * cells);
        for j in 0..cells {
            for i in 0..cells {
                let mut inside = 0usize;
                for b in 0..sub {
                    for a in 0..sub {
                        let x = -half_width + (i as f64 + (a as f64 + 0.5) / sub as f64) * h;
                        let y = -half_width + (j as f64 + (b as f64 + 0.5) / sub as f64) * h;
                        if domain.contains(&Vec3::new(x, y, 0.0)) {
                            inside += 1;
                        }
                    }
                }
                volumes.push(h * h * inside as f64 / (sub * sub) as f64);
            }
        }
        SpatialGrid::Clipped {
            half_width,
            cells,
            volumes,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SpatialGrid::Polar { rings, sectors, .. } => rings * sectors,
            SpatialGrid::Spherical {
                shells,
                bands,
                sectors,
                ..
            } => shells * bands * sectors,
            SpatialGrid::Clipped { cells, .. } => cells * cells,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            SpatialGrid::Spherical { .. } => 3,
            _ => 2,
        }
    }

    pub fn locate(&self, x: &Vec3) -> usize {
        let frac_index = |f: f64, n: usize| ((f * n as f64).floor().max(0.0) as usize).min(n - 1);
        let azimuth = |x: &Vec3| (x.y.atan2(x.x) + std::f64::consts::PI) / (2.0 * std::f64::consts::PI);
        match self {
            SpatialGrid::Polar {
                radius,
                rings,
                sectors,
            } => {
                let ring = frac_index(x.norm_squared() / (radius * radius), *rings);
                ring * sectors + frac_index(azimuth(x), *sectors)
            }
            SpatialGrid::Spherical {
                radius,
                shells,
                bands,
                sectors,
            } => {
                let r = x.norm();
                let shell = frac_index((r / radius).powi(3), *shells);
                let cos = if r > 0.0 { x.z / r } else { 0.0 };
                let band = frac_index(0.5 * (cos + 1.0), *bands);
                (shell * bands + band) * sectors + frac_index(azimuth(x), *sectors)
            }
            SpatialGrid::Clipped {
                half_width, cells, ..
            } => {
                let i = frac_index((x.x + half_width) / (2.0 * half_width), *cells);
                let j = frac_index((x.y + half_width) / (2.0 * half_width), *cells);
                j * cells + i
            }
        }
    }

    /// Representative point of a cell.
    pub fn center(&self, idx: usize) -> Vec3 {
        let tau = 2.0 * std::f64::consts::PI;
        match self {
            SpatialGrid::Polar {
                radius,
                rings,
                sectors,
            } => {
                let (ring, sector) = (idx / sectors, idx % sectors);
                let r = radius * ((ring as f64 + 0.5) / *rings as f64).sqrt();
                let phi = -std::f64::consts::PI + tau * (sector as f64 + 0.5) / *sectors as f64;
                Vec3::new(r * phi.cos(), r * phi.sin(), 0.0)
            }
            SpatialGrid::Spherical {
                radius,
                shells,
                bands,
                sectors,
            } => {
                let sector = idx % sectors;
                let band = (idx / sectors) % bands;
                let shell = idx / (sectors * bands);
                let r = radius * ((shell as f64 + 0.5) / *shells as f64).cbrt();
                let cos = -1.0 + 2.0 * (band as f64 + 0.5) / *bands as f64;
                let sin = (1.0 - cos * cos).sqrt();
                let phi = -std::f64::consts::PI + tau * (sector as f64 + 0.5) / *sectors as f64;
                Vec3::new(r * sin * phi.cos(), r * sin * phi.sin(), r * cos)
            }
            SpatialGrid::Clipped {
                half_width, cells, ..
            } => {
                let h = 2.0 * half_width / *cells as f64;
                let (j, i) = (idx / cells, idx % cells);
                Vec3::new(-half_width + (i as f64 + 0.5) * h, -half_width + (j as f64 + 0.5) * h, 0.0)
            }
        }
    }

    pub fn volume(&self, idx: usize) -> f64 {
        match self {
            SpatialGrid::Polar { radius, .. } => std::f64::consts::PI * radius * radius / self.len() as f64,
            SpatialGrid::Spherical { radius, .. } => {
                4.0 / 3.0 * std::f64::consts::PI * radius.powi(3) / self.len() as f64
            }
            SpatialGrid::Clipped { volumes, .. } => volumes[idx],
        }
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.len()).map(|i| self.volume(i)).sum()
    }
}

/// Cartesian velocity cells on `[-vmax, vmax]^d`; velocities outside the box
/// go to a per-spatial-cell overflow bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityGrid {
    pub dim: usize,
    pub vmax: f64,
    pub cells: usize,
}

impl VelocityGrid {
    pub fn len(&self) -> usize {
        self.cells.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.cells == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.vmax / self.cells as f64
    }

    pub fn locate(&self, v: &Vec3) -> Option<usize> {
        let h = self.spacing();
        let mut idx = 0;
        for k in (0..self.dim).rev() {
            if !(v[k].abs() <= self.vmax) {
                return None;
            }
            let i = (((v[k] + self.vmax) / h).floor() as usize).min(self.cells - 1);
            idx = idx * self.cells + i;
        }
        Some(idx)
    }

    /// Per-axis `(lo, hi)` bounds of a cell.
    pub fn bounds(&self, mut idx: usize) -> Vec<(f64, f64)> {
        let h = self.spacing();
        (0..self.dim)
            .map(|_| {
                let i = idx % self.cells;
                idx /= self.cells;
                let lo = -self.vmax + i as f64 * h;
                (lo, lo + h)
            })
            .collect()
    }

    pub fn center(&self, idx: usize) -> Vec3 {
        let mut c = Vec3::zeros();
        for (k, (lo, hi)) in self.bounds(idx).into_iter().enumerate() {
            c[k] = 0.5 * (lo + hi);
        }
        c
    }
}

/// Full phase-space binning plus a fine speed histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub spatial: SpatialGrid,
    pub velocity: VelocityGrid,
    pub speed_bins: usize,
    pub speed_max: f64,
}

impl PhaseGrid {
    pub fn new(spatial: SpatialGrid, velocity: VelocityGrid) -> Self {
        PhaseGrid {
            spatial,
            velocity,
            speed_bins: 6000,
            speed_max: 12.0,
        }
    }

    /// Default grid: `spatial_resolution` cells per spatial direction and
    /// `velocity_cells` per velocity axis over `[-DEFAULT_VMAX, DEFAULT_VMAX]`.
    pub fn for_domain(domain: &Domain, spatial_resolution: usize, velocity_cells: usize) -> Self {
        Self::new(
            SpatialGrid::for_domain(domain, spatial_resolution),
            VelocityGrid {
                dim: domain.dim(),
                vmax: DEFAULT_VMAX,
                cells: velocity_cells,
            },
        )
    }

    pub fn dim(&self) -> usize {
        self.velocity.dim
    }

    pub fn cells(&self) -> usize {
        self.spatial.len() * self.velocity.len()
    }

    fn speed_bin(&self, s: f64) -> Option<usize> {
        let b = (s / self.speed_max * self.speed_bins as f64).floor();
        if b < self.speed_bins as f64 {
            Some(b as usize)
        } else {
            None
        }
    }
}

/// Lyapunov weight `m_alpha(x, v) = (e^2 + d(Omega)/(|v| c4) - tau(x, -v) + |v|^{2 delta})^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub alpha: f64,
    pub delta: f64,
    pub c4: f64,
    pub diameter: f64,
}

impl WeightSpec {
    pub fn new(alpha: f64, delta: f64, c4: f64, diameter: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(invalid("weights.alpha", "must be finite and nonnegative"));
        }
        if !(delta > 0.0) {
            return Err(invalid("weights.delta", "must be positive"));
        }
        if !(c4 > 0.0 && c4 <= 1.0) {
            return Err(invalid("weights.c4", format!("{c4} not in (0, 1]")));
        }
        if !(diameter > 0.0) {
            return Err(invalid("diameter", "must be positive"));
        }
        Ok(WeightSpec {
            alpha,
            delta,
            c4,
            diameter,
        })
    }

    pub fn for_wall(alpha: f64, delta: f64, wall: &WallModel, domain: &Domain) -> Result<Self> {
        Self::new(alpha, delta, c4_for(wall), domain.diameter())
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        WeightSpec { alpha, ..*self }
    }

    /// Base of the weight for a given backward exit time.
    pub fn base_with_tau(&self, speed: f64, tau_back: f64) -> f64 {
        if speed == 0.0 {
            return f64::INFINITY;
        }
        let e2 = std::f64::consts::E * std::f64::consts::E;
        e2 + self.diameter / (speed * self.c4) - tau_back + speed.powf(2.0 * self.delta)
    }

    pub fn base(&self, domain: &Domain, x: &Vec3, v: &Vec3) -> f64 {
        self.base_with_tau(v.norm(), domain.exit_time(x, &-v))
    }

    pub fn weight(&self, domain: &Domain, x: &Vec3, v: &Vec3) -> f64 {
        weight_m_alpha(domain, x, v, self)
    }
}

/// `m_alpha(x, v)`; `+inf` at `v = 0`.
pub fn weight_m_alpha(domain: &Domain, x: &Vec3, v: &Vec3, spec: &WeightSpec) -> f64 {
    let b = spec.base(domain, x, v);
    if spec.alpha == 0.0 {
        1.0
    } else {
        b.powf(spec.alpha)
    }
}

/// `<x, v> = 1 + tau(x, v) + |v|^{2 delta}`.
pub fn bracket(domain: &Domain, x: &Vec3, v: &Vec3, delta: f64) -> f64 {
    1.0 + domain.exit_time(x, v) + v.norm().powf(2.0 * delta)
}

/// `c4` from the wall: solves `(1 - c4)^4 = 1 - beta0` in Maxwell mode with
/// `beta0 < 1`, and is `1/2` otherwise.
pub fn c4_for(wall: &WallModel) -> f64 {
    match wall.beta0() {
        Some(b) if b < 1.0 => 1.0 - (1.0 - b).powf(0.25),
        _ => 0.5,
    }
}

/// `|||f|||_mu = ||f||_{L1} + mu ||f||_{m_alpha}`.
pub fn mu_norm(l1: f64, weighted: f64, mu: f64) -> f64 {
    l1 + mu * weighted
}

/// Binned estimate of a phase-space measure.
///
/// `cells` and `overflow` hold deposited counts; masses are counts divided by
/// `normalizer` (the number of launched particles), so killed or absorbed
/// particles reduce the total mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalField {
    pub grid: PhaseGrid,
    pub cells: Vec<f64>,
    /// Per spatial cell, deposits whose velocity leaves the velocity box.
    pub overflow: Vec<f64>,
    pub speed_hist: Vec<f64>,
    pub speed_overflow: f64,
    /// Deposits with `|v| < SLOW_SPEED_FLOOR`, excluded from weighted sums.
    pub slow: f64,
    pub tracked: Vec<WeightSpec>,
    /// Sums of `m_alpha` over deposits, one per tracked spec.
    pub weight_sums: Vec<f64>,
    pub deposits: f64,
    pub normalizer: f64,
    /// Number of independent samples behind the estimate; `None` for an
    /// exact reference.
    pub effective_samples: Option<f64>,
}

impl EmpiricalField {
    pub fn new(grid: PhaseGrid, tracked: Vec<WeightSpec>) -> Self {
        let ns = grid.spatial.len();
        EmpiricalField {
            cells: vec![0.0; grid.cells()],
            overflow: vec![0.0; ns],
            speed_hist: vec![0.0; grid.speed_bins],
            speed_overflow: 0.0,
            slow: 0.0,
            weight_sums: vec![0.0; tracked.len()],
            tracked,
            deposits: 0.0,
            normalizer: 0.0,
            effective_samples: Some(0.0),
            grid,
        }
    }

    /// Exact reference from cell masses (no sampling noise).
    pub fn from_cell_masses(grid: PhaseGrid, cells: Vec<f64>, overflow: Vec<f64>) -> Result<Self> {
        if cells.len() != grid.cells() || overflow.len() != grid.spatial.len() {
            return Err(Error::GridMismatch("mass vector does not match the grid".into()));
        }
        let total = cells.iter().sum::<f64>() + overflow.iter().sum::<f64>();
        let mut f = EmpiricalField::new(grid, Vec::new());
        f.cells = cells;
        f.overflow = overflow;
        f.deposits = total;
        f.normalizer = 1.0;
        f.effective_samples = None;
        Ok(f)
    }

    /// Exact cell masses of `uniform(Omega) x N(0, theta I)`.
    pub fn uniform_maxwellian(grid: PhaseGrid, theta: f64) -> Result<Self> {
        let ns = grid.spatial.len();
        let total_vol = grid.spatial.total_volume();
        let sd = theta.sqrt();
        let cdf = |a: f64| 0.5 * (1.0 + erf(a / (sd * std::f64::consts::SQRT_2)));
        let vmasses: Vec<f64> = (0..grid.velocity.len())
            .map(|j| grid.velocity.bounds(j).iter().map(|(lo, hi)| cdf(*hi) - cdf(*lo)).product())
            .collect();
        let inside: f64 = vmasses.iter().sum();
        let mut cells = Vec::with_capacity(grid.cells());
        let mut overflow = Vec::with_capacity(ns);
        for i in 0..ns {
            let w = grid.spatial.volume(i) / total_vol;
            cells.extend(vmasses.iter().map(|m| w * m));
            overflow.push(w * (1.0 - inside).max(0.0));
        }
        Self::from_cell_masses(grid, cells, overflow)
    }

    pub fn deposit(&mut self, domain: &Domain, x: &Vec3, v: &Vec3) {
        let nv = self.grid.velocity.len();
        let s = self.grid.spatial.locate(x);
        match self.grid.velocity.locate(v) {
            Some(j) => self.cells[s * nv + j] += 1.0,
            None => self.overflow[s] += 1.0,
        }
        let speed = v.norm();
        match self.grid.speed_bin(speed) {
            Some(b) => self.speed_hist[b] += 1.0,
            None => self.speed_overflow += 1.0,
        }
        if !self.tracked.is_empty() {
            if speed < SLOW_SPEED_FLOOR {
                self.slow += 1.0;
            } else {
                let tau_back = domain.exit_time(x, &-v);
                for (sum, spec) in self.weight_sums.iter_mut().zip(&self.tracked) {
                    let b = spec.base_with_tau(speed, tau_back);
                    *sum += if spec.alpha == 0.0 { 1.0 } else { b.powf(spec.alpha) };
                }
            }
        }
        self.deposits += 1.0;
    }

    /// Adds another field's tallies. Counts are integers stored in `f64`,
    /// so this is exact and order independent for the histograms.
    pub fn merge(&mut self, other: &EmpiricalField) -> Result<()> {
        if self.grid != other.grid || self.tracked != other.tracked {
            return Err(Error::GridMismatch("cannot merge fields on different grids".into()));
        }
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            *a += b;
        }
        for (a, b) in self.overflow.iter_mut().zip(&other.overflow) {
            *a += b;
        }
        for (a, b) in self.speed_hist.iter_mut().zip(&other.speed_hist) {
            *a += b;
        }
        for (a, b) in self.weight_sums.iter_mut().zip(&other.weight_sums) {
            *a += b;
        }
        self.speed_overflow += other.speed_overflow;
        self.slow += other.slow;
        self.deposits += other.deposits;
        self.normalizer += other.normalizer;
        self.effective_samples = match (self.effective_samples, other.effective_samples) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        Ok(())
    }

    /// Rescales counts so that the field averages `replicas` merged runs.
    pub fn set_normalizer(&mut self, normalizer: f64) {
        self.normalizer = normalizer;
    }

    pub fn mass(&self) -> f64 {
        if self.normalizer == 0.0 {
            0.0
        } else {
            self.deposits / self.normalizer
        }
    }

    pub fn cell_mass(&self, spatial: usize, velocity: usize) -> f64 {
        self.cells[spatial * self.grid.velocity.len() + velocity] / self.normalizer
    }

    /// Mass per spatial cell, overflow included.
    pub fn spatial_marginal(&self) -> Vec<f64> {
        let nv = self.grid.velocity.len();
        (0..self.grid.spatial.len())
            .map(|s| (self.cells[s * nv..(s + 1) * nv].iter().sum::<f64>() + self.overflow[s]) / self.normalizer)
            .collect()
    }

    pub fn overflow_mass(&self) -> f64 {
        self.overflow.iter().sum::<f64>() / self.normalizer
    }

    /// `||f||_{m_alpha}` for the tracked spec at `index`: average of the
    /// exact per-deposit weights times the mass.
    pub fn weighted_norm(&self, index: usize) -> f64 {
        if self.normalizer == 0.0 {
            return 0.0;
        }
        let spec = &self.tracked[index];
        if spec.alpha == 0.0 {
            return self.mass();
        }
        self.weight_sums[index] / self.normalizer
    }

    /// Index of a tracked spec with the given exponent.
    pub fn tracked_index(&self, alpha: f64) -> Option<usize> {
        self.tracked.iter().position(|s| (s.alpha - alpha).abs() < 1e-12)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.cells.iter().chain(&self.overflow).chain(&self.speed_hist).all(|&c| c >= 0.0)
    }

    /// Writes `spatial_cell, velocity_cell, x.., v.., count` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let d = self.grid.dim();
        let axes = ["0", "1", "2"];
        let mut header = vec!["spatial_cell".to_string(), "velocity_cell".to_string()];
        header.extend(axes[..d].iter().map(|a| format!("x{a}")));
        header.extend(axes[..d].iter().map(|a| format!("v{a}")));
        header.push("count".into());
        writeln!(out, "{}", header.join(","))?;
        let nv = self.grid.velocity.len();
        for s in 0..self.grid.spatial.len() {
            let xc = self.grid.spatial.center(s);
            let xs: Vec<String> = (0..d).map(|k| format!("{:.6}", xc[k])).collect();
            for j in 0..nv {
                let c = self.cells[s * nv + j];
                if c == 0.0 {
                    continue;
                }
                let vc = self.grid.velocity.center(j);
                let vs: Vec<String> = (0..d).map(|k| format!("{:.6}", vc[k])).collect();
                writeln!(out, "{s},{j},{},{},{}", xs.join(","), vs.join(","), c)?;
            }
            if self.overflow[s] > 0.0 {
                let blanks = vec![""; d].join(",");
                writeln!(out, "{s},overflow,{},{},{}", xs.join(","), blanks, self.overflow[s])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Binned L1 distance with its statistical floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    pub value: f64,
    /// Expected distance between two independent estimates of the same
    /// law at these sample sizes.
    pub floor: f64,
}

/// `sum_cells |a - b|` over cell masses, overflow bins included.
pub fn l1_distance(a: &EmpiricalField, b: &EmpiricalField) -> Result<Distance> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch("l1_distance requires identical grids".into()));
    }
    let na = a.effective_samples.unwrap_or(f64::INFINITY);
    let nb = b.effective_samples.unwrap_or(f64::INFINITY);
    let (sa, sb) = (a.normalizer.max(f64::MIN_POSITIVE), b.normalizer.max(f64::MIN_POSITIVE));
    let mut value = 0.0;
    let mut floor = 0.0;
    let pairs = a.cells.iter().zip(&b.cells).chain(a.overflow.iter().zip(&b.overflow));
    let c = (2.0 / std::f64::consts::PI).sqrt();
    for (x, y) in pairs {
        let (p, q) = (x / sa, y / sb);
        value += (p - q).abs();
        let pooled = if na.is_finite() && nb.is_finite() {
            (x + y) / (sa + sb)
        } else if na.is_finite() {
            q
        } else {
            p
        };
        let var = pooled * (1.0 - pooled).max(0.0) * (1.0 / na + 1.0 / nb);
        floor += c * var.sqrt();
    }
    Ok(Distance { value, floor })
}

/// Kolmogorov distance between the field's speed law and `cdf`, evaluated
/// at the speed-histogram bin edges.
pub fn speed_ks<F: Fn(f64) -> f64>(field: &EmpiricalField, cdf: F) -> f64 {
    let total: f64 = field.speed_hist.iter().sum::<f64>() + field.speed_overflow;
    if total == 0.0 {
        return 0.0;
    }
    let h = field.grid.speed_max / field.grid.speed_bins as f64;
    let mut acc = 0.0;
    let mut worst: f64 = 0.0;
    for (i, c) in field.speed_hist.iter().enumerate() {
        acc += c;
        let edge = (i + 1) as f64 * h;
        worst = worst.max((acc / total - cdf(edge)).abs());
    }
    worst
}

/// CDF of `|V|` for `V ~ N(0, theta I_d)`.
pub fn maxwellian_speed_cdf(dim: usize, theta: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let z = s / theta.sqrt();
    match dim {
        2 => 1.0 - (-0.5 * z * z).exp(),
        _ => erf(z / std::f64::consts::SQRT_2) - (2.0 / std::f64::consts::PI).sqrt() * z * (-0.5 * z * z).exp(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// `d(t) = A exp(-kappa t)`.
    Exponential,
    /// `d(t) = A (1 + t)^{-p}`.
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub mode: FitMode,
    pub amplitude: f64,
    /// `kappa` or `p`.
    pub rate: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit of `ln d` against `t` or `ln(1 + t)`, using points in
/// `window` whose distance exceeds the matching floor.
pub fn fit_rate(times: &[f64], distances: &[f64], floors: Option<&[f64]>, mode: FitMode, window: (f64, f64)) -> Result<RateFit> {
    if times.len() != distances.len() || floors.is_some_and(|f| f.len() != times.len()) {
        return Err(Error::Fit("input lengths differ".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, (&t, &d)) in times.iter().zip(distances).enumerate() {
        let floor = floors.map_or(0.0, |f| f[i]);
        if t < window.0 || t > window.1 || !(d > floor) || d <= 0.0 {
            continue;
        }
        xs.push(match mode {
            FitMode::Exponential => t,
            FitMode::Polynomial => (1.0 + t).ln(),
        });
        ys.push(d.ln());
    }
    let n = xs.len();
    if n < 4 {
        return Err(Error::Fit(format!("{n} usable points, need at least 4")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(RateFit {
        mode,
        amplitude: intercept.exp(),
        rate: -slope,
        r_squared,
        points: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v2(x: f64, y: f64) -> Vec3 {
        Vec3::new(x, y, 0.0)
    }

    fn disk() -> Domain {
        Domain::disk(1.0).unwrap()
    }

    #[test]
    fn weight_examples() {
        let d = disk();
        let spec = WeightSpec::new(1.0, 0.3, 0.5, 2.0).unwrap();
        let e2 = std::f64::consts::E.powi(2);
        let a = weight_m_alpha(&d, &Vec3::zeros(), &v2(1.0, 0.0), &spec);
        assert!((a - (e2 + 4.0)).abs() < 1e-12);
        let b = weight_m_alpha(&d, &v2(0.5, 0.0), &v2(1.0, 0.0), &spec);
        assert!((b - (e2 + 3.5)).abs() < 1e-12);
        assert!((a - b - 0.5).abs() < 1e-12);
        assert_eq!(weight_m_alpha(&d, &Vec3::zeros(), &Vec3::zeros(), &spec), f64::INFINITY);
    }

    #[test]
    fn c4_from_beta0() {
        let th = crate::wall::BoundaryField::Constant(1.0);
        let w = WallModel::maxwell(crate::wall::BoundaryField::Constant(0.5), th).unwrap();
        let c4 = c4_for(&w);
        assert!((c4 - 0.159_103_584_746_285_5).abs() < 1e-12);
        assert!(((1.0 - c4).powi(4) - 0.5).abs() < 1e-12);
        assert_eq!(c4_for(&WallModel::maxwell(crate::wall::BoundaryField::Constant(1.0), th).unwrap()), 0.5);
        assert_eq!(c4_for(&WallModel::diffuse(th).unwrap()), 0.5);
    }

    fn small_grid() -> PhaseGrid {
        PhaseGrid::for_domain(&disk(), 4, 8)
    }

    #[test]
    fn weighted_norm_examples() {
        let d = disk();
        let spec = WeightSpec::new(1.0, 0.1, 0.5, 2.0).unwrap();
        let mut f = EmpiricalField::new(small_grid(), vec![spec, spec.with_alpha(0.0)]);
        f.deposit(&d, &Vec3::zeros(), &v2(1.0, 0.0));
        f.set_normalizer(1.0);
        let e2 = std::f64::consts::E.powi(2);
        assert!((f.weighted_norm(0) - (e2 + 4.0)).abs() < 1e-12);
        assert_eq!(f.weighted_norm(1), 1.0);
    }

    #[test]
    fn weighted_norm_matches_quadrature_for_uniform_maxwellian() {
        let d = disk();
        let spec = WeightSpec::new(1.0, 0.1, 0.5, 2.0).unwrap();
        // Oracle: the base splits into speed and position factors,
        // E[e^2 + 4/s + s^0.2 - dist(x, -v_hat)/s], with the unit-speed
        // backward distance averaged over uniform positions and directions.
        let e2 = std::f64::consts::E.powi(2);
        let speed = |g: &dyn Fn(f64) -> f64| {
            crate::quad::integrate(|s| g(s) * s * (-0.5 * s * s).exp(), 0.0, 40.0, 1e-13, 40).0
        };
        let dist = |r: f64, a: f64| {
            let c = r * a.cos();
            -c + (c * c + 1.0 - r * r).sqrt()
        };
        let mean_dist = crate::quad::integrate(
            |r| {
                2.0 * r * crate::quad::integrate(|a| dist(r, a), 0.0, std::f64::consts::PI, 1e-13, 30).0
                    / std::f64::consts::PI
            },
            0.0,
            1.0,
            1e-12,
            30,
        )
        .0;
        let inv = speed(&|s| 1.0 / s);
        let oracle = e2 + 4.0 * inv + speed(&|s| s.powf(0.2)) - inv * mean_dist;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let mut f = EmpiricalField::new(small_grid(), vec![spec]);
        let mut w = Vec::with_capacity(n);
        for _ in 0..n {
            let x = d.sample_uniform(&mut rng);
            let v = v2(rng.sample(rand_distr::StandardNormal), rng.sample(rand_distr::StandardNormal));
            f.deposit(&d, &x, &v);
            w.push(spec.weight(&d, &x, &v));
        }
        f.set_normalizer(n as f64);
        let mean = w.iter().sum::<f64>() / n as f64;
        let sd = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((f.weighted_norm(0) - mean).abs() < 1e-9 * mean);
        assert!((mean - oracle).abs() < 4.0 * sd / (n as f64).sqrt(), "{mean} vs {oracle}");
    }

    #[test]
    fn l1_examples() {
        let d = disk();
        let mut a = EmpiricalField::new(small_grid(), vec![]);
        a.deposit(&d, &v2(0.1, 0.1), &v2(0.5, 0.5));
        a.set_normalizer(1.0);
        assert_eq!(l1_distance(&a, &a).unwrap().value, 0.0);
        let mut b = EmpiricalField::new(small_grid(), vec![]);
        b.deposit(&d, &v2(-0.5, -0.1), &v2(-3.0, 2.0));
        b.set_normalizer(1.0);
        assert_eq!(l1_distance(&a, &b).unwrap().value, 2.0);
        let other = EmpiricalField::new(PhaseGrid::for_domain(&d, 5, 8), vec![]);
        assert!(l1_distance(&a, &other).is_err());
    }

    #[test]
    fn l1_floor_tracks_sampling_noise() {
        let d = disk();
        let grid = PhaseGrid::new(
            SpatialGrid::Polar { radius: 1.0, rings: 32, sectors: 32 },
            VelocityGrid { dim: 2, vmax: 6.0, cells: 16 },
        );
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let mut sample = || {
            let mut f = EmpiricalField::new(grid.clone(), vec![]);
            for _ in 0..n {
                let x = d.sample_uniform(&mut rng);
                let v = v2(rng.sample(rand_distr::StandardNormal), rng.sample(rand_distr::StandardNormal));
                f.deposit(&d, &x, &v);
            }
            f.set_normalizer(n as f64);
            f.effective_samples = Some(n as f64);
            f
        };
        let a = sample();
        let b = sample();
        let dist = l1_distance(&a, &b).unwrap();
        assert!(dist.value > 0.5 * dist.floor && dist.value < 1.5 * dist.floor, "{dist:?}");
        let exact = EmpiricalField::uniform_maxwellian(grid, 1.0).unwrap();
        let to_exact = l1_distance(&a, &exact).unwrap();
        assert!(to_exact.value > 0.5 * to_exact.floor && to_exact.value < 1.5 * to_exact.floor, "{to_exact:?}");
    }

    #[test]
    fn analytic_reference_is_normalized() {
        let f = EmpiricalField::uniform_maxwellian(small_grid(), 1.3).unwrap();
        assert!((f.mass() - 1.0).abs() < 1e-12);
        let ball = Domain::ball(1.0).unwrap();
        let g = EmpiricalField::uniform_maxwellian(PhaseGrid::for_domain(&ball, 3, 6), 1.0).unwrap();
        assert!((g.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_examples() {
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let exp: Vec<f64> = ts.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let f = fit_rate(&ts, &exp, None, FitMode::Exponential, (0.0, 100.0)).unwrap();
        assert!((f.rate - 0.7).abs() < 1e-6 && (f.amplitude - 3.0).abs() < 1e-6);
        let poly: Vec<f64> = ts.iter().map(|t| 5.0 * (1.0 + t).powi(-2)).collect();
        let f = fit_rate(&ts, &poly, None, FitMode::Polynomial, (0.0, 100.0)).unwrap();
        assert!((f.rate - 2.0).abs() < 1e-6);
        assert!(fit_rate(&ts[..3], &exp[..3], None, FitMode::Exponential, (0.0, 100.0)).is_err());
        let floors = vec![2.0; ts.len()];
        assert!(fit_rate(&ts, &exp, Some(&floors), FitMode::Exponential, (0.0, 100.0)).is_err());
    }

    #[test]
    fn fit_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ts: Vec<f64> = (0..30).map(|i| i as f64 * 0.3).collect();
        let ds: Vec<f64> = ts
            .iter()
            .map(|t| 2.0 * (-0.5 * t).exp() * (1.0 + 0.01 * rng.sample::<f64, _>(rand_distr::StandardNormal)))
            .collect();
        let f = fit_rate(&ts, &ds, None, FitMode::Exponential, (0.0, 100.0)).unwrap();
        assert!((f.rate - 0.5).abs() < 0.025);
    }

    #[test]
    fn speed_ks_against_exact_cdf() {
        let d = disk();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut f = EmpiricalField::new(small_grid(), vec![]);
        for _ in 0..100_000 {
            let v = v2(rng.sample(rand_distr::StandardNormal), rng.sample(rand_distr::StandardNormal));
            f.deposit(&d, &Vec3::zeros(), &v);
        }
        assert!(speed_ks(&f, |s| maxwellian_speed_cdf(2, 1.0, s)) < 0.01);
        assert!(speed_ks(&f, |s| maxwellian_speed_cdf(2, 2.0, s)) > 0.05);
    }

    #[test]
    fn speed_cdf_3d_matches_quadrature() {
        let dens = |s: f64| (2.0 / std::f64::consts::PI).sqrt() * s * s * (-0.5 * s * s).exp();
        for s in [0.5, 1.0, 2.0, 3.5] {
            let q = crate::quad::integrate(dens, 0.0, s, 1e-14, 30).0;
            assert!((q - maxwellian_speed_cdf(3, 1.0, s)).abs() < 1e-10, "{s}: {q} vs {}", maxwellian_speed_cdf(3, 1.0, s));
        }
    }

    #[test]
    fn spatial_cells_round_trip() {
        let grids = [
            SpatialGrid::Polar { radius: 2.0, rings: 5, sectors: 7 },
            SpatialGrid::Spherical { radius: 1.0, shells: 3, bands: 4, sectors: 5 },
        ];
        for g in grids {
            for i in 0..g.len() {
                assert_eq!(g.locate(&g.center(i)), i);
            }
        }
        let shape = Domain::implicit2d(crate::geometry::LevelSetPreset::Superellipse { exponent: 4.0, scale: 1.0 }).unwrap();
        let g = SpatialGrid::clipped(&shape, 16);
        assert!((g.total_volume() - shape.volume()).abs() < 5e-3);
    }
}
