//! TOML run configuration.
//!
//! ```toml
//! [geometry]
//! shape = "disk"          # disk | ball | superellipse
//! radius = 1.0
//!
//! [wall]
//! kind = "cl"             # cl | maxwell
//! r_perp = 0.5
//! r_par = 0.5
//! theta = { kind = "constant", base = 1.0 }
//!
//! [collision]
//! kind = "bgk"            # bgk | annulus | relaxation
//! sigma = { kind = "constant", value = 1.0 }
//! ```
//!
//! Every block has defaults; see [`RunConfig::default`].

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::collision::{CartesianGrid, CollisionModel, PostCollisionLaw, RateField, RelaxationTable, DEFAULT_DELTA_K};
use crate::error::{Error, Result};
use crate::experiments::{DoeblinSettings, RunSettings};
use crate::geometry::{Domain, LevelSetPreset, Vec3};
use crate::measures::{c4_for, PhaseGrid, SpatialGrid, VelocityGrid, WeightSpec, DEFAULT_DELTA, DEFAULT_VMAX};
use crate::transport::{InitialLaw, System};
use crate::wall::{BoundaryField, WallModel};

/// One failed constraint, with the modelling assumption it protects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub key: String,
    pub message: String,
    pub assumption: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} [{}]", self.key, self.message, self.assumption)
    }
}

const H_WALL: &str = "wall accommodation range";
const H_THETA: &str = "positive continuous wall temperature";
const H_RATE: &str = "bounded nonnegative collision rate";
const H_MOMENT: &str = "collision kernel moment bound";
const H_WEIGHT: &str = "weight exponent range";
const H_DOMAIN: &str = "bounded strictly convex domain";
const H_RUN: &str = "run plumbing";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Disk,
    Ball,
    Superellipse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub shape: ShapeKind,
    pub radius: f64,
    /// Superellipse exponent.
    pub exponent: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            shape: ShapeKind::Disk,
            radius: 1.0,
            exponent: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Constant,
    Angular,
}

/// Boundary field `base * (1 + amplitude * cos(mode * azimuth))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub kind: FieldKind,
    pub base: f64,
    pub amplitude: f64,
    pub mode: u32,
}

impl FieldConfig {
    pub fn constant(base: f64) -> Self {
        FieldConfig {
            kind: FieldKind::Constant,
            base,
            amplitude: 0.0,
            mode: 1,
        }
    }

    pub fn field(&self) -> BoundaryField {
        match self.kind {
            FieldKind::Constant => BoundaryField::Constant(self.base),
            FieldKind::Angular => BoundaryField::Angular {
                base: self.base,
                amplitude: self.amplitude,
                mode: self.mode,
            },
        }
    }
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self::constant(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallKind {
    Cl,
    Maxwell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WallConfig {
    pub kind: WallKind,
    pub r_perp: f64,
    pub r_par: f64,
    pub beta: FieldConfig,
    pub theta: FieldConfig,
}

impl Default for WallConfig {
    fn default() -> Self {
        WallConfig {
            kind: WallKind::Cl,
            r_perp: 0.5,
            r_par: 0.5,
            beta: FieldConfig::constant(1.0),
            theta: FieldConfig::constant(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaKind {
    Constant,
    Hole,
    Smooth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaConfig {
    pub kind: SigmaKind,
    /// Constant value, or the value outside the hole.
    pub value: f64,
    pub hole_radius: f64,
    pub hole_center: [f64; 3],
    /// Transition width of the smooth hole.
    pub width: f64,
}

impl Default for SigmaConfig {
    fn default() -> Self {
        SigmaConfig {
            kind: SigmaKind::Constant,
            value: 1.0,
            hole_radius: 0.5,
            hole_center: [0.0; 3],
            width: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionKind {
    Bgk,
    Annulus,
    Relaxation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnulusConfig {
    pub a: f64,
    pub b: f64,
}

impl Default for AnnulusConfig {
    fn default() -> Self {
        AnnulusConfig { a: 0.5, b: 2.0 }
    }
}

/// Grids of a relaxation table: cubes `[-half_width, half_width]^d` split
/// into `cells^d` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableGridConfig {
    pub spatial_half_width: f64,
    pub spatial_cells: usize,
    pub velocity_half_width: f64,
    pub velocity_cells: usize,
}

impl Default for TableGridConfig {
    fn default() -> Self {
        TableGridConfig {
            spatial_half_width: 1.0,
            spatial_cells: 4,
            velocity_half_width: 4.0,
            velocity_cells: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollisionConfig {
    pub kind: CollisionKind,
    pub sigma: SigmaConfig,
    pub annulus: AnnulusConfig,
    pub table_path: Option<PathBuf>,
    pub table_grid: TableGridConfig,
    pub delta_k: f64,
}

impl Default for CollisionConfig {
    fn default() -> Self {
        CollisionConfig {
            kind: CollisionKind::Bgk,
            sigma: SigmaConfig::default(),
            annulus: AnnulusConfig::default(),
            table_path: None,
            table_grid: TableGridConfig::default(),
            delta_k: DEFAULT_DELTA_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    pub alpha: f64,
    pub delta: f64,
    /// Explicit `c4`; derived from the wall when absent.
    pub c4: Option<f64>,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        WeightsConfig {
            alpha: 1.0,
            delta: DEFAULT_DELTA,
            c4: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub particles: usize,
    pub horizon: f64,
    pub snapshots: Vec<f64>,
    pub seed: u64,
    pub workers: usize,
    pub initial: InitialLaw,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            particles: 100_000,
            horizon: 10.0,
            snapshots: vec![0.0, 1.0, 2.0, 5.0, 10.0],
            seed: 1,
            workers: 1,
            initial: InitialLaw::uniform_maxwellian(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub spatial_resolution: usize,
    pub velocity_cells: usize,
    pub vmax: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            spatial_resolution: 4,
            velocity_cells: 12,
            vmax: DEFAULT_VMAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub relax_time: f64,
    pub average_time: f64,
    pub average_samples: usize,
    pub fit_window: [f64; 2],
    pub signal_factor: f64,
    pub lyapunov_horizons: Vec<f64>,
    pub lyapunov_step: f64,
    pub drift_limit: f64,
    pub flux_speed_cap: f64,
    pub flux_tolerance: f64,
    pub counterexample_times: Vec<f64>,
    pub kernel_thetas: Vec<f64>,
    pub kernel_r_perps: Vec<f64>,
    pub kernel_r_pars: Vec<f64>,
    pub kernel_speeds: Vec<f64>,
    pub doeblin: DoeblinSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let [thetas, r_perps, r_pars, speeds] = crate::experiments::default_kernel_grid();
        ExperimentConfig {
            relax_time: 20.0,
            average_time: 10.0,
            average_samples: 11,
            fit_window: [0.5, 10.0],
            signal_factor: 3.0,
            lyapunov_horizons: vec![2.0, 5.0, 10.0],
            lyapunov_step: 0.25,
            drift_limit: 3.0,
            flux_speed_cap: 5.0,
            flux_tolerance: 0.05,
            counterexample_times: vec![5.0, 10.0, 20.0],
            kernel_thetas: thetas,
            kernel_r_perps: r_perps,
            kernel_r_pars: r_pars,
            kernel_speeds: speeds,
            doeblin: DoeblinSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory; the `--out` flag and `KW_OUT_DIR` take precedence.
    pub dir: Option<PathBuf>,
}

#[allow(clippy::derivable_impls)]
impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub wall: WallConfig,
    pub collision: CollisionConfig,
    pub weights: WeightsConfig,
    pub simulation: SimulationConfig,
    pub grid: GridConfig,
    pub experiment: ExperimentConfig,
    pub output: OutputConfig,
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text)?;
    let violations = config.violations();
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(Error::Config(violations))
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn check(&mut self, ok: bool, key: &str, message: impl Into<String>, assumption: &str) {
        if !ok {
            self.0.push(Violation {
                key: key.into(),
                message: message.into(),
                assumption: assumption.into(),
            });
        }
    }

    fn field(&mut self, key: &str, f: &FieldConfig, lo: f64, hi: f64, assumption: &str) {
        let field = f.field();
        let (inf, sup) = (field.inf(), field.sup());
        self.check(
            f.base.is_finite() && f.amplitude.is_finite() && inf > lo && sup <= hi,
            key,
            format!("values span [{inf}, {sup}], need ({lo}, {hi}]"),
            assumption,
        );
    }
}

impl RunConfig {
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn dim(&self) -> usize {
        match self.geometry.shape {
            ShapeKind::Ball => 3,
            _ => 2,
        }
    }

    /// Every constraint violation, empty when the configuration is valid.
    pub fn violations(&self) -> Vec<Violation> {
        let mut c = Collector(Vec::new());
        let d = self.dim() as f64;
        let g = &self.geometry;
        c.check(g.radius > 0.0 && g.radius.is_finite(), "geometry.radius", "must be positive", H_DOMAIN);
        if g.shape == ShapeKind::Superellipse {
            c.check(g.exponent >= 2.0, "geometry.exponent", "superellipse needs exponent >= 2", H_DOMAIN);
        }

        let w = &self.wall;
        c.field("wall.theta", &w.theta, 0.0, f64::INFINITY, H_THETA);
        match w.kind {
            WallKind::Cl => {
                c.check(w.r_perp > 0.0 && w.r_perp <= 1.0, "wall.r_perp", format!("{} not in (0, 1]", w.r_perp), H_WALL);
                c.check(w.r_par > 0.0 && w.r_par < 2.0, "wall.r_par", format!("{} not in (0, 2)", w.r_par), H_WALL);
            }
            WallKind::Maxwell => c.field("wall.beta", &w.beta, 0.0, 1.0, H_WALL),
        }

        let col = &self.collision;
        let s = &col.sigma;
        c.check(s.value >= 0.0 && s.value.is_finite(), "collision.sigma.value", "must be finite and nonnegative", H_RATE);
        if s.kind != SigmaKind::Constant {
            c.check(s.hole_radius > 0.0, "collision.sigma.hole_radius", "must be positive", H_RATE);
        }
        if s.kind == SigmaKind::Smooth {
            c.check(s.width > 0.0, "collision.sigma.width", "must be positive", H_RATE);
        }
        c.check(
            col.delta_k > 0.0 && col.delta_k < 0.5,
            "collision.delta_k",
            format!("{} not in (0, 1/2)", col.delta_k),
            H_MOMENT,
        );
        match col.kind {
            CollisionKind::Annulus => c.check(
                col.annulus.a >= 0.0 && col.annulus.b > col.annulus.a && col.annulus.b.is_finite(),
                "collision.annulus",
                "need 0 <= a < b",
                H_MOMENT,
            ),
            CollisionKind::Relaxation => {
                c.check(col.table_path.is_some(), "collision.table_path", "relaxation needs a table", H_RATE);
                let t = &col.table_grid;
                c.check(
                    t.spatial_cells > 0 && t.velocity_cells > 0 && t.spatial_half_width >= g.radius && t.velocity_half_width > 0.0,
                    "collision.table_grid",
                    "grids must be nonempty and the spatial grid must cover the domain",
                    H_RATE,
                );
            }
            CollisionKind::Bgk => {}
        }

        let wt = &self.weights;
        c.check(wt.alpha > 0.0 && wt.alpha < d, "weights.alpha", format!("{} not in (0, {d})", wt.alpha), H_WEIGHT);
        c.check(
            wt.delta > 0.0 && wt.delta < col.delta_k / d,
            "weights.delta",
            format!("{} not in (0, delta_k/d = {})", wt.delta, col.delta_k / d),
            H_MOMENT,
        );
        if let Some(c4) = wt.c4 {
            c.check(c4 > 0.0 && c4 <= 1.0, "weights.c4", "must lie in (0, 1]", H_WEIGHT);
            if c.0.iter().all(|v| !v.key.starts_with("wall")) {
                if let Ok(wall) = self.wall_model() {
                    let derived = c4_for(&wall);
                    c.check(
                        (c4 - derived).abs() < 1e-12,
                        "weights.c4",
                        format!("fixed by the wall to {derived}"),
                        H_WEIGHT,
                    );
                }
            }
        }

        let sim = &self.simulation;
        c.check(sim.particles > 0, "simulation.particles", "must be positive", H_RUN);
        c.check(sim.workers > 0, "simulation.workers", "must be positive", H_RUN);
        c.check(sim.seed <= i64::MAX as u64, "simulation.seed", "must fit a TOML integer (below 2^63)", H_RUN);
        c.check(sim.horizon >= 0.0, "simulation.horizon", "must be nonnegative", H_RUN);
        c.check(
            sim.snapshots.windows(2).all(|p| p[0] <= p[1]) && sim.snapshots.iter().all(|t| *t >= 0.0 && *t <= sim.horizon),
            "simulation.snapshots",
            "must be sorted and inside [0, horizon]",
            H_RUN,
        );
        if let Ok(domain) = self.domain() {
            if let Err(e) = sim.initial.validate(&domain) {
                c.check(false, "simulation.initial", e.to_string(), H_RUN);
            }
        }
        let gr = &self.grid;
        c.check(
            gr.spatial_resolution > 0 && gr.velocity_cells > 0 && gr.vmax > 0.0,
            "grid",
            "resolutions and vmax must be positive",
            H_RUN,
        );
        let e = &self.experiment;
        c.check(e.fit_window[0] < e.fit_window[1], "experiment.fit_window", "must be increasing", H_RUN);
        c.check(e.average_samples > 0, "experiment.average_samples", "must be positive", H_RUN);
        c.0
    }

    pub fn domain(&self) -> Result<Domain> {
        let g = &self.geometry;
        match g.shape {
            ShapeKind::Disk => Domain::disk(g.radius),
            ShapeKind::Ball => Domain::ball(g.radius),
            ShapeKind::Superellipse => Domain::implicit2d(LevelSetPreset::Superellipse {
                exponent: g.exponent,
                scale: g.radius,
            }),
        }
    }

    pub fn wall_model(&self) -> Result<WallModel> {
        let w = &self.wall;
        match w.kind {
            WallKind::Cl => WallModel::cercignani_lampis(w.r_perp, w.r_par, w.theta.field()),
            WallKind::Maxwell => WallModel::maxwell(w.beta.field(), w.theta.field()),
        }
    }

    pub fn rate_field(&self) -> Result<RateField> {
        let s = &self.collision.sigma;
        let center = Vec3::from(s.hole_center);
        Ok(match s.kind {
            SigmaKind::Constant => RateField::Constant(s.value),
            SigmaKind::Hole => RateField::hole(s.value, center, s.hole_radius)?,
            SigmaKind::Smooth => RateField::Smooth {
                sigma_inf: s.value,
                center,
                radius: s.hole_radius,
                width: s.width,
            },
        })
    }

    /// Collision model; relative table paths resolve against `base_dir`.
    pub fn collision_model(&self, base_dir: &Path) -> Result<CollisionModel> {
        let col = &self.collision;
        let dim = self.dim();
        match col.kind {
            CollisionKind::Bgk => CollisionModel::new(self.rate_field()?, PostCollisionLaw::Bgk, dim, col.delta_k),
            CollisionKind::Annulus => CollisionModel::new(
                self.rate_field()?,
                PostCollisionLaw::Annulus {
                    a: col.annulus.a,
                    b: col.annulus.b,
                },
                dim,
                col.delta_k,
            ),
            CollisionKind::Relaxation => {
                let path = col
                    .table_path
                    .as_ref()
                    .ok_or_else(|| Error::Table("relaxation needs collision.table_path".into()))?;
                let t = &col.table_grid;
                let spatial = CartesianGrid {
                    dim,
                    half_width: t.spatial_half_width,
                    cells: t.spatial_cells,
                };
                let velocity = CartesianGrid {
                    dim,
                    half_width: t.velocity_half_width,
                    cells: t.velocity_cells,
                };
                let table = RelaxationTable::read_csv(&base_dir.join(path), spatial, velocity)?;
                CollisionModel::relaxation(table, col.delta_k)
            }
        }
    }

    pub fn system(&self, base_dir: &Path) -> Result<System> {
        System::new(self.domain()?, self.wall_model()?, self.collision_model(base_dir)?)
    }

    pub fn weight_spec(&self, domain: &Domain) -> Result<WeightSpec> {
        let wall = self.wall_model()?;
        let c4 = self.weights.c4.unwrap_or_else(|| c4_for(&wall));
        WeightSpec::new(self.weights.alpha, self.weights.delta, c4, domain.diameter())
    }

    pub fn phase_grid(&self, domain: &Domain) -> PhaseGrid {
        let g = &self.grid;
        PhaseGrid::new(
            SpatialGrid::for_domain(domain, g.spatial_resolution),
            VelocityGrid {
                dim: domain.dim(),
                vmax: g.vmax,
                cells: g.velocity_cells,
            },
        )
    }

    pub fn run_settings(&self) -> RunSettings {
        RunSettings {
            particles: self.simulation.particles,
            seed: self.simulation.seed,
            workers: self.simulation.workers,
        }
    }
}
