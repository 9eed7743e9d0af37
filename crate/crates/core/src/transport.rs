//! Event-driven particle engine: free flight until the earlier of a wall hit
//! or an accepted collision, then reflect or resample, and repeat.
//!
//! Also provides the absorbing-wall/killing simulator and its closed-form
//! density, used as an exact oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{CollisionModel, RateField};
use crate::error::{invalid, Error, Result};
use crate::geometry::{Domain, PhaseState, Shape, Vec3};
use crate::measures::{EmpiricalField, PhaseGrid, WeightSpec};
use crate::quad;
use crate::wall::{diffuse_sample, WallModel};

/// Particles per work unit. Fixed so that results do not depend on the
/// number of workers.
pub const CHUNK_SIZE: usize = 4096;
/// Work units evaluated between two sequential merges.
const BATCH_CHUNKS: usize = 16;
/// Normal speeds below this are treated as grazing.
pub const GRAZING_TOL: f64 = 1e-10;

/// Domain, wall law and collision mechanism of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct System {
    pub domain: Domain,
    pub wall: WallModel,
    pub collision: CollisionModel,
}

impl System {
    pub fn new(domain: Domain, wall: WallModel, collision: CollisionModel) -> Result<Self> {
        if collision.dim != domain.dim() {
            return Err(invalid("collision", "collision model dimension differs from the domain"));
        }
        Ok(System {
            domain,
            wall,
            collision,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Temperature of an explicit equilibrium `uniform(Omega) x N(0, theta)`
    /// when one is known: constant wall temperature together with either no
    /// collisions, or BGK collisions at the same unit temperature.
    pub fn analytic_equilibrium_temperature(&self) -> Option<f64> {
        let theta = self.wall.theta().constant_value()?;
        if self.collision.sigma_inf() == 0.0 {
            return Some(theta);
        }
        let bgk = matches!(self.collision.law, crate::collision::PostCollisionLaw::Bgk);
        (bgk && theta == 1.0).then_some(1.0)
    }
}

/// Event tallies of a trajectory or ensemble.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EventCounts {
    pub wall_hits: u64,
    /// Wall hits with incoming speed at most the flux speed cap.
    pub capped_wall_hits: u64,
    pub collisions: u64,
    pub grazing: u64,
}

impl EventCounts {
    pub fn add(&mut self, other: &EventCounts) {
        self.wall_hits += other.wall_hits;
        self.capped_wall_hits += other.capped_wall_hits;
        self.collisions += other.collisions;
        self.grazing += other.grazing;
    }
}

/// Hooks called by the engine; every method defaults to doing nothing.
pub trait EventObserver {
    /// Straight flight from `x` with velocity `v` for `duration`.
    fn flight(&mut self, _x: &Vec3, _v: &Vec3, _duration: f64) {}
    /// Wall hit at `x` with incoming velocity `u`, reflected to `v`.
    fn wall_hit(&mut self, _x: &Vec3, _u: &Vec3, _v: &Vec3) {}
    fn collision(&mut self, _x: &Vec3, _before: &Vec3, _after: &Vec3) {}
}

impl EventObserver for () {}

/// Records every flight segment.
#[derive(Debug, Default, Clone)]
pub struct FlightLog {
    pub segments: Vec<(Vec3, Vec3, f64)>,
}

impl EventObserver for FlightLog {
    fn flight(&mut self, x: &Vec3, v: &Vec3, duration: f64) {
        self.segments.push((*x, *v, duration));
    }
}

/// Moves a particle for `duration` time units.
pub fn advance_particle<R: Rng + ?Sized, O: EventObserver + ?Sized>(
    system: &System,
    state: PhaseState,
    duration: f64,
    flux_speed_cap: f64,
    rng: &mut R,
    observer: &mut O,
) -> (PhaseState, EventCounts) {
    let domain = &system.domain;
    let dim = domain.dim();
    let mut counts = EventCounts::default();
    let PhaseState { mut x, mut v } = state;
    let mut remaining = duration;
    while remaining > 0.0 {
        let tau = domain.exit_time(&x, &v);
        let horizon = tau.min(remaining);
        if let Some((s, y)) = system.collision.next_collision(&x, &v, horizon, rng) {
            observer.flight(&x, &v, s);
            let after = system.collision.gain_sample(&y, &v, rng);
            observer.collision(&y, &v, &after);
            counts.collisions += 1;
            x = y;
            v = after;
            remaining -= s;
            continue;
        }
        if tau > remaining {
            observer.flight(&x, &v, remaining);
            x += remaining * v;
            break;
        }
        observer.flight(&x, &v, tau);
        remaining -= tau;
        x = domain.project_to_boundary(&(x + tau * v));
        let n = domain.normal_unchecked(&x);
        let u = v;
        counts.wall_hits += 1;
        if u.norm() <= flux_speed_cap {
            counts.capped_wall_hits += 1;
        }
        let theta = system.wall.theta().at(&x);
        if u.dot(&n) < GRAZING_TOL {
            counts.grazing += 1;
            v = diffuse_sample(dim, &n, theta, rng);
        } else {
            v = system.wall.sample(dim, &x, &n, &u, rng);
        }
        let mut tries = 0;
        while -v.dot(&n) < GRAZING_TOL {
            counts.grazing += 1;
            tries += 1;
            v = if tries < 8 {
                system.wall.sample(dim, &x, &n, &u, rng)
            } else {
                diffuse_sample(dim, &n, theta, rng)
            };
        }
        observer.wall_hit(&x, &u, &v);
    }
    (PhaseState { x, v }, counts)
}

/// Spatial part of an initial law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpatialLaw {
    UniformDomain,
    UniformBall { center: [f64; 3], radius: f64 },
}

/// Velocity part of an initial law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocityLaw {
    Maxwellian { theta: f64 },
    UniformBall { radius: f64 },
    Point { v: [f64; 3] },
    /// Uniform direction at a fixed speed.
    Shell { speed: f64 },
}

/// Product initial law `f0(x, v) = a(x) b(v)` with unit mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialLaw {
    pub spatial: SpatialLaw,
    pub velocity: VelocityLaw,
}

fn unit_ball_volume(dim: usize) -> f64 {
    if dim == 2 {
        std::f64::consts::PI
    } else {
        4.0 / 3.0 * std::f64::consts::PI
    }
}

fn sample_ball<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> Vec3 {
    loop {
        let mut p = Vec3::zeros();
        for k in 0..dim {
            p[k] = rng.gen_range(-1.0..1.0);
        }
        if p.norm_squared() < 1.0 {
            return p * radius;
        }
    }
}

impl InitialLaw {
    /// Equilibrium-type law `uniform(Omega) x N(0, theta I)`.
    pub fn uniform_maxwellian(theta: f64) -> Self {
        InitialLaw {
            spatial: SpatialLaw::UniformDomain,
            velocity: VelocityLaw::Maxwellian { theta },
        }
    }

    /// `f_eps = 1_{eps B}(x) 1_{eps B}(v) / (eps^{2d} |B|^2)`.
    pub fn concentrated(eps: f64) -> Self {
        InitialLaw {
            spatial: SpatialLaw::UniformBall {
                center: [0.0; 3],
                radius: eps,
            },
            velocity: VelocityLaw::UniformBall { radius: eps },
        }
    }

    pub fn validate(&self, domain: &Domain) -> Result<()> {
        if let SpatialLaw::UniformBall { center, radius } = &self.spatial {
            let c = Vec3::from(*center);
            if !(*radius > 0.0) || !domain.contains(&c) {
                return Err(invalid("initial.spatial", "ball must have positive radius and a centre inside the domain"));
            }
            let inside = match domain.shape() {
                Shape::Disk { radius: big } | Shape::Ball { radius: big } => c.norm() + radius < *big,
                Shape::Implicit2d { inner_radius, .. } => c.norm() + radius < *inner_radius,
            };
            if !inside {
                return Err(invalid("initial.spatial", "ball must lie inside the domain"));
            }
        }
        match &self.velocity {
            VelocityLaw::Maxwellian { theta } if !(*theta > 0.0) => Err(invalid("initial.velocity.theta", "must be positive")),
            VelocityLaw::UniformBall { radius } if !(*radius > 0.0) => Err(invalid("initial.velocity.radius", "must be positive")),
            VelocityLaw::Shell { speed } if !(*speed > 0.0) => Err(invalid("initial.velocity.speed", "must be positive")),
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, domain: &Domain, rng: &mut R) -> PhaseState {
        let dim = domain.dim();
        let x = match &self.spatial {
            SpatialLaw::UniformDomain => domain.sample_uniform(rng),
            SpatialLaw::UniformBall { center, radius } => Vec3::from(*center) + sample_ball(dim, *radius, rng),
        };
        let v = match &self.velocity {
            VelocityLaw::Maxwellian { theta } => {
                let mut v = Vec3::zeros();
                for k in 0..dim {
                    v[k] = theta.sqrt() * rng.sample::<f64, _>(StandardNormal);
                }
                v
            }
            VelocityLaw::UniformBall { radius } => sample_ball(dim, *radius, rng),
            VelocityLaw::Point { v } => {
                let mut p = Vec3::from(*v);
                if dim == 2 {
                    p.z = 0.0;
                }
                p
            }
            VelocityLaw::Shell { speed } => {
                let mut d = Vec3::zeros();
                loop {
                    for k in 0..dim {
                        d[k] = rng.sample(StandardNormal);
                    }
                    if d.norm() > 1e-12 {
                        break d * (speed / d.norm());
                    }
                }
            }
        };
        PhaseState { x, v }
    }

    /// Density of the law, or `None` when the velocity part is singular.
    pub fn density(&self, domain: &Domain, x: &Vec3, v: &Vec3) -> Option<f64> {
        let dim = domain.dim();
        let a = match &self.spatial {
            SpatialLaw::UniformDomain => {
                if domain.contains(x) {
                    1.0 / domain.volume()
                } else {
                    0.0
                }
            }
            SpatialLaw::UniformBall { center, radius } => {
                if (x - Vec3::from(*center)).norm() < *radius {
                    1.0 / (unit_ball_volume(dim) * radius.powi(dim as i32))
                } else {
                    0.0
                }
            }
        };
        let b = match &self.velocity {
            VelocityLaw::Maxwellian { theta } => {
                (-v.norm_squared() / (2.0 * theta)).exp() / (2.0 * std::f64::consts::PI * theta).powf(0.5 * dim as f64)
            }
            VelocityLaw::UniformBall { radius } => {
                if v.norm() < *radius {
                    1.0 / (unit_ball_volume(dim) * radius.powi(dim as i32))
                } else {
                    0.0
                }
            }
            VelocityLaw::Point { .. } | VelocityLaw::Shell { .. } => return None,
        };
        Some(a * b)
    }
}

/// Parameters of an ensemble run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSettings {
    pub particles: usize,
    pub seed: u64,
    pub workers: usize,
    /// Sorted snapshot times.
    pub snapshot_times: Vec<f64>,
    pub grid: PhaseGrid,
    pub tracked: Vec<WeightSpec>,
    /// Keep every particle state at every snapshot.
    pub keep_states: bool,
    /// Speed cap for the capped wall-hit tally.
    pub flux_speed_cap: f64,
    /// Offset added to particle indices when deriving their random streams.
    pub stream_offset: u64,
}

impl EnsembleSettings {
    pub fn new(particles: usize, seed: u64, snapshot_times: Vec<f64>, grid: PhaseGrid) -> Self {
        EnsembleSettings {
            particles,
            seed,
            workers: 1,
            snapshot_times,
            grid,
            tracked: Vec::new(),
            keep_states: false,
            flux_speed_cap: f64::INFINITY,
            stream_offset: 0,
        }
    }
}

/// Ensemble state at one snapshot time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub field: EmpiricalField,
    /// Events accumulated over `[0, time]`.
    pub events: EventCounts,
    pub states: Option<Vec<PhaseState>>,
}

/// Random stream of particle `index` under `seed`.
pub fn particle_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?)
}

/// Runs chunks `0..n_chunks` through `work` on `workers` threads and folds
/// the results strictly in chunk order.
pub(crate) fn ordered_chunks<T: Send, A>(
    workers: usize,
    n_chunks: usize,
    init: A,
    work: impl Fn(usize) -> Result<T> + Sync,
    mut fold: impl FnMut(&mut A, T) -> Result<()>,
) -> Result<A> {
    let pool = thread_pool(workers)?;
    let mut acc = init;
    let mut start = 0;
    while start < n_chunks {
        let end = (start + BATCH_CHUNKS).min(n_chunks);
        let results: Vec<Result<T>> = pool.install(|| (start..end).into_par_iter().map(&work).collect());
        for r in results {
            fold(&mut acc, r?)?;
        }
        start = end;
    }
    Ok(acc)
}

/// Simulates `settings.particles` independent particles from `law` and
/// tallies them at every snapshot time.
pub fn simulate_ensemble(system: &System, law: &InitialLaw, settings: &EnsembleSettings) -> Result<Vec<Snapshot>> {
    law.validate(&system.domain)?;
    let times = &settings.snapshot_times;
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|t| *t < 0.0) {
        return Err(invalid("simulation.snapshots", "snapshot times must be sorted and nonnegative"));
    }
    if settings.particles == 0 {
        return Err(invalid("simulation.particles", "need at least one particle"));
    }
    let n = settings.particles;
    let n_chunks = n.div_ceil(CHUNK_SIZE);
    let empty: Vec<Snapshot> = times
        .iter()
        .map(|&time| Snapshot {
            time,
            field: EmpiricalField::new(settings.grid.clone(), settings.tracked.clone()),
            events: EventCounts::default(),
            states: settings.keep_states.then(Vec::new),
        })
        .collect();
    let work = |chunk: usize| -> Result<Vec<Snapshot>> {
        let mut local = empty.clone();
        let lo = chunk * CHUNK_SIZE;
        let hi = (lo + CHUNK_SIZE).min(n);
        for p in lo..hi {
            let mut rng = particle_rng(settings.seed, settings.stream_offset + p as u64);
            let mut state = law.sample(&system.domain, &mut rng);
            let mut now = 0.0;
            let mut events = EventCounts::default();
            for snap in local.iter_mut() {
                let (next, c) = advance_particle(system, state, snap.time - now, settings.flux_speed_cap, &mut rng, &mut ());
                state = next;
                now = snap.time;
                events.add(&c);
                snap.field.deposit(&system.domain, &state.x, &state.v);
                snap.events.add(&events);
                if let Some(s) = snap.states.as_mut() {
                    s.push(state);
                }
            }
        }
        Ok(local)
    };
    let mut snapshots = ordered_chunks(settings.workers, n_chunks, empty.clone(), work, |acc, part| {
        for (a, b) in acc.iter_mut().zip(part) {
            a.field.merge(&b.field)?;
            a.events.add(&b.events);
            if let (Some(sa), Some(sb)) = (a.states.as_mut(), b.states) {
                sa.extend(sb);
            }
        }
        Ok(())
    })?;
    for s in snapshots.iter_mut() {
        s.field.set_normalizer(n as f64);
        s.field.effective_samples = Some(n as f64);
    }
    Ok(snapshots)
}

/// Survival estimate of the absorbing-wall problem with killing at rate
/// `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub particles: usize,
}

/// Particles move freely, die at the first accepted collision time and are
/// absorbed at the wall. Returns the surviving fraction at each time.
pub fn simulate_killed(
    domain: &Domain,
    rate: &RateField,
    law: &InitialLaw,
    times: &[f64],
    particles: usize,
    seed: u64,
    workers: usize,
) -> Result<SurvivalCurve> {
    law.validate(domain)?;
    let n_chunks = particles.div_ceil(CHUNK_SIZE);
    let work = |chunk: usize| -> Result<Vec<u64>> {
        let mut alive = vec![0u64; times.len()];
        let lo = chunk * CHUNK_SIZE;
        for p in lo..(lo + CHUNK_SIZE).min(particles) {
            let mut rng = particle_rng(seed, p as u64);
            let s = law.sample(domain, &mut rng);
            let exit = domain.exit_time(&s.x, &s.v);
            let death = rate.next_collision(&s.x, &s.v, exit, &mut rng).map_or(exit, |(t, _)| t);
            for (a, &t) in alive.iter_mut().zip(times) {
                if death > t {
                    *a += 1;
                }
            }
        }
        Ok(alive)
    };
    let alive = ordered_chunks(workers, n_chunks, vec![0u64; times.len()], work, |acc, part| {
        for (a, b) in acc.iter_mut().zip(part) {
            *a += b;
        }
        Ok(())
    })?;
    let nf = particles as f64;
    let survival: Vec<f64> = alive.iter().map(|&a| a as f64 / nf).collect();
    let std_errors = survival.iter().map(|p| (p * (1.0 - p) / nf).sqrt()).collect();
    Ok(SurvivalCurve {
        times: times.to_vec(),
        survival,
        std_errors,
        particles,
    })
}

/// `Phi(t, x, v) = 1{tau(x, -v) >= t} exp(-int_0^t sigma(x - (t - s) v) ds) f0(x - t v, v)`.
pub fn killed_transport_exact(domain: &Domain, rate: &RateField, law: &InitialLaw, t: f64, x: &Vec3, v: &Vec3) -> Result<f64> {
    if !rate.has_closed_form_path_integral() {
        return Err(Error::Unsupported("exact killed transport needs a constant or hole rate field".into()));
    }
    if domain.exit_time(x, &-v) < t {
        return Ok(0.0);
    }
    let y = x - t * v;
    let f0 = law
        .density(domain, &y, v)
        .ok_or_else(|| Error::Unsupported("initial law has no density".into()))?;
    if f0 == 0.0 {
        return Ok(0.0);
    }
    Ok((-rate.path_integral(&y, v, t)).exp() * f0)
}

/// `int_0^d (exp(e0 + b u) - c)^+ du` for `e0 + b u <= 0`.
fn exp_linear_excess(e0: f64, b: f64, d: f64, c: f64) -> f64 {
    let (mut start, mut end) = (0.0f64, d);
    if c > 0.0 {
        let k = c.ln() - e0;
        if b == 0.0 {
            if k > 0.0 {
                return 0.0;
            }
        } else if b > 0.0 {
            start = start.max(k / b);
        } else {
            end = end.min(k / b);
        }
    }
    let len = end - start;
    if !(len > 0.0) {
        return 0.0;
    }
    let z = b * len;
    let growth = if z.abs() < 1e-12 { 1.0 + 0.5 * z } else { z.exp_m1() / z };
    (e0 + b * start).exp() * len * growth - c * len
}

/// Rates handled by the reduced quadrature: `sigma_inf` outside a centred
/// ball of radius `hole` (zero for a constant rate).
fn centred_rate(domain: &Domain, rate: &RateField) -> Result<(f64, f64)> {
    if !matches!(domain.shape(), Shape::Disk { .. } | Shape::Ball { .. }) {
        return Err(Error::Unsupported("quadrature needs a disk or ball".into()));
    }
    match rate {
        RateField::Constant(c) => Ok((*c, 0.0)),
        RateField::Hole {
            sigma_inf,
            center,
            radius,
        } if center.norm() == 0.0 => Ok((*sigma_inf, *radius)),
        _ => Err(Error::Unsupported("quadrature needs a constant or centred hole rate field".into())),
    }
}

/// `E[(exp(-int_0^t sigma(y + s v) ds) - c)^+ ; |v| <= s_max, |y + t v| <= wall]`
/// under the concentrated law of radius `eps`.
///
/// With `v = s e1` fixed by rotation invariance and `y = (y1, w)`, the time
/// spent in the hole is piecewise linear in `y1`, so the innermost integral
/// is exact; `w` and `s` are integrated adaptively.
#[allow(clippy::too_many_arguments)]
fn concentrated_survival(dim: usize, eps: f64, sigma_inf: f64, hole: f64, t: f64, s_max: f64, wall: f64, c: f64) -> f64 {
    use std::f64::consts::PI;
    let tol = 1e-12;
    let depth = 40;
    let line = |s: f64, w: f64| -> f64 {
        let half = (eps * eps - w * w).max(0.0).sqrt();
        let lo = -half;
        let len = s * t;
        let hi = half.min((wall * wall - w * w).max(0.0).sqrt() - len);
        if hi <= lo {
            return 0.0;
        }
        let h = if w < hole { (hole * hole - w * w).sqrt() } else { 0.0 };
        let overlap = |y1: f64| ((y1 + len).min(h) - y1.max(-h)).max(0.0);
        let mut points = vec![lo, hi];
        if h > 0.0 {
            points.extend([-h - len, -h, h - len, h].into_iter().filter(|p| *p > lo && *p < hi));
        }
        points.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let rate = if s > 0.0 { sigma_inf / s } else { 0.0 };
        points
            .windows(2)
            .map(|p| {
                let d = p[1] - p[0];
                if d <= 0.0 {
                    return 0.0;
                }
                let (o0, o1) = (overlap(p[0]), overlap(p[1]));
                exp_linear_excess(-sigma_inf * t + rate * o0, rate * (o1 - o0) / d, d, c)
            })
            .sum()
    };
    let mid = |s: f64| {
        let across = |w: f64| line(s, w) * if dim == 2 { 2.0 } else { 2.0 * PI * w };
        let mut knots = vec![0.0, eps];
        if hole > 0.0 && hole < eps {
            knots.insert(1, hole);
        }
        knots.windows(2).map(|k| quad::integrate(across, k[0], k[1], tol, depth).0).sum::<f64>()
    };
    let shell = |s: f64| if dim == 2 { 2.0 * PI * s } else { 4.0 * PI * s * s };
    let top = s_max.min(eps);
    if !(top > 0.0) {
        return 0.0;
    }
    let unit = unit_ball_volume(dim) * eps.powi(dim as i32);
    quad::integrate(|s| shell(s) * mid(s), 0.0, top, tol, depth).0 / (unit * unit)
}

/// Total mass `int Phi(t, x, v) dx dv` of the killed problem started from
/// the concentrated law of radius `eps`.
pub fn killed_survival_quadrature(domain: &Domain, rate: &RateField, eps: f64, t: f64) -> Result<f64> {
    let (sigma_inf, hole) = centred_rate(domain, rate)?;
    let wall = domain.radius().expect("disk or ball");
    Ok(concentrated_survival(domain.dim(), eps, sigma_inf, hole, t, f64::INFINITY, wall, 0.0))
}

/// Left-hand side of the concentrated-data lower bound:
/// `int f_eps(x - t v, v) 1{t|v| <= r_in - eps} [exp(-int sigma) - eps^{2d}|B|^2 h0]^+ dx dv`.
pub fn counterexample_lhs(domain: &Domain, rate: &RateField, eps: f64, t: f64, r_in: f64, h0: f64) -> Result<f64> {
    let (sigma_inf, hole) = centred_rate(domain, rate)?;
    let dim = domain.dim();
    let correction = eps.powi(2 * dim as i32) * unit_ball_volume(dim).powi(2) * h0;
    let s_max = if t > 0.0 { (r_in - eps) / t } else { f64::INFINITY };
    Ok(concentrated_survival(dim, eps, sigma_inf, hole, t, s_max, f64::INFINITY, correction))
}

/// Result of comparing a snapshot against the free-flight branch of the
/// Duhamel formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuhamelReport {
    pub lag: f64,
    pub cells_checked: usize,
    /// `(cell, observed mass, lower bound, margin)` of violating cells.
    pub violations: Vec<(usize, f64, f64, f64)>,
}

/// Checks `S_t f >= exp(-sigma_inf s) * (transport of S_{t-s} f over s)`
/// cell by cell, where only states whose forward flight stays inside the
/// domain for the lag contribute to the transported field.
pub fn duhamel_lower_bound_check(
    system: &System,
    earlier: &Snapshot,
    later: &Snapshot,
    margin_sigmas: f64,
) -> Result<DuhamelReport> {
    let states = earlier
        .states
        .as_ref()
        .ok_or_else(|| invalid("earlier", "snapshot must keep particle states"))?;
    if earlier.field.grid != later.field.grid {
        return Err(Error::GridMismatch("snapshots use different grids".into()));
    }
    let lag = later.time - earlier.time;
    if lag < 0.0 {
        return Err(invalid("later", "snapshot precedes the earlier one"));
    }
    let later = &later.field;
    let mut moved = EmpiricalField::new(later.grid.clone(), Vec::new());
    for s in states {
        if system.domain.exit_time(&s.x, &s.v) > lag {
            moved.deposit(&system.domain, &(s.x + lag * s.v), &s.v);
        }
    }
    let damping = (-system.collision.sigma_inf() * lag).exp();
    let n = later.normalizer;
    let mut violations = Vec::new();
    let pairs = later.cells.iter().zip(&moved.cells).chain(later.overflow.iter().zip(&moved.overflow));
    let mut checked = 0;
    for (cell, (&obs, &mv)) in pairs.enumerate() {
        if mv == 0.0 {
            continue;
        }
        checked += 1;
        let bound = damping * mv;
        let margin = margin_sigmas * (obs.sqrt() + bound.sqrt());
        if obs < bound - margin {
            violations.push((cell, obs / n, bound / n, margin / n));
        }
    }
    Ok(DuhamelReport {
        lag,
        cells_checked: checked,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_linear_excess_matches_quadrature() {
        for &(e0, b, d, c) in &[(-0.3, 0.7, 0.4, 0.0), (-0.1, -2.0, 1.0, 0.3), (-2.0, 1.5, 1.0, 0.5), (-1.0, 0.0, 2.0, 0.2)] {
            let exact = exp_linear_excess(e0, b, d, c);
            let numeric = quad::integrate(|u: f64| ((e0 + b * u).exp() - c).max(0.0), 0.0, d, 1e-13, 50).0;
            assert!((exact - numeric).abs() < 1e-10, "{exact} vs {numeric}");
        }
    }

    #[test]
    fn concentrated_survival_limits() {
        for dim in [2, 3] {
            let free = concentrated_survival(dim, 0.5, 0.0, 0.0, 3.0, f64::INFINITY, f64::INFINITY, 0.0);
            assert!((free - 1.0).abs() < 1e-10);
            let damped = concentrated_survival(dim, 0.5, 0.7, 0.0, 3.0, f64::INFINITY, f64::INFINITY, 0.0);
            assert!((damped - (-2.1f64).exp()).abs() < 1e-10);
            // Every path stays inside a hole of radius eps (1 + t).
            let sheltered = concentrated_survival(dim, 0.5, 5.0, 2.0, 3.0, f64::INFINITY, f64::INFINITY, 0.0);
            assert!((sheltered - 1.0).abs() < 1e-10);
        }
    }
}
