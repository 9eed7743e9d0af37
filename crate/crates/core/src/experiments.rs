//! Scripted experiments built on the particle engine.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::collision::RateField;
use crate::error::{invalid, Error, Result};
use crate::geometry::{tangent_basis, Domain, PhaseState, Shape, Vec3};
use crate::measures::{
    fit_rate, l1_distance, maxwellian_speed_cdf, speed_ks, Distance, EmpiricalField, FitMode, PhaseGrid, RateFit,
    SpatialGrid, VelocityGrid, WeightSpec,
};
use crate::transport::{
    advance_particle, counterexample_lhs, ordered_chunks, particle_rng, simulate_ensemble, EnsembleSettings,
    EventCounts, InitialLaw, System, CHUNK_SIZE,
};
use crate::wall::{cl_density, cl_sample, cl_window, flux_quadrature, BoundaryField, WallModel};

/// Shared Monte Carlo knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub particles: usize,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateReport {
    pub relax_time: f64,
    pub average_times: Vec<f64>,
    /// L1 distance between the two replicas.
    pub replica_distance: Distance,
    /// Replicas disagree by more than four statistical floors.
    pub unconverged: bool,
    /// Temperature of the explicit equilibrium, when one is known.
    pub analytic_theta: Option<f64>,
    /// Kolmogorov distance of the speed law to the explicit equilibrium.
    pub speed_ks: Option<f64>,
    /// Largest relative deviation of a spatial cell mass from the
    /// explicit equilibrium.
    pub spatial_max_deviation: Option<f64>,
    pub distance_to_analytic: Option<Distance>,
    pub events: EventCounts,
}

/// Time-averaged steady state: two independent replicas, each averaged over
/// `samples` snapshots spread over `[relax_time, relax_time + average_time]`.
pub fn steady_state(
    system: &System,
    initial: &InitialLaw,
    run: &RunSettings,
    grid: &PhaseGrid,
    relax_time: f64,
    average_time: f64,
    samples: usize,
) -> Result<(EmpiricalField, SteadyStateReport)> {
    if samples == 0 {
        return Err(invalid("experiment.samples", "need at least one averaging snapshot"));
    }
    let times: Vec<f64> = (0..samples)
        .map(|k| {
            if samples == 1 {
                relax_time + average_time
            } else {
                relax_time + average_time * k as f64 / (samples - 1) as f64
            }
        })
        .collect();
    let mut replicas = Vec::new();
    let mut events = EventCounts::default();
    for r in 0..2u64 {
        let mut settings = EnsembleSettings::new(run.particles, run.seed, times.clone(), grid.clone());
        settings.workers = run.workers;
        settings.stream_offset = r << 40;
        let snaps = simulate_ensemble(system, initial, &settings)?;
        let mut avg = EmpiricalField::new(grid.clone(), Vec::new());
        for s in &snaps {
            avg.merge(&s.field)?;
        }
        avg.set_normalizer((run.particles * samples) as f64);
        avg.effective_samples = Some(run.particles as f64);
        events.add(&snaps.last().expect("nonempty").events);
        replicas.push(avg);
    }
    let replica_distance = l1_distance(&replicas[0], &replicas[1])?;
    let mut field = replicas[0].clone();
    field.merge(&replicas[1])?;
    field.set_normalizer((2 * run.particles * samples) as f64);
    field.effective_samples = Some(2.0 * run.particles as f64);

    let analytic_theta = system.analytic_equilibrium_temperature();
    let (mut ks, mut dev, mut dist) = (None, None, None);
    if let Some(theta) = analytic_theta {
        let dim = system.dim();
        ks = Some(speed_ks(&field, |s| maxwellian_speed_cdf(dim, theta, s)));
        let total = grid.spatial.total_volume();
        let marginal = field.spatial_marginal();
        dev = Some(
            marginal
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let expected = grid.spatial.volume(i) / total;
                    (m - expected).abs() / expected
                })
                .fold(0.0, f64::max),
        );
        let reference = EmpiricalField::uniform_maxwellian(grid.clone(), theta)?;
        dist = Some(l1_distance(&field, &reference)?);
    }
    let report = SteadyStateReport {
        relax_time,
        average_times: times,
        unconverged: replica_distance.value > 4.0 * replica_distance.floor,
        replica_distance,
        analytic_theta,
        speed_ks: ks,
        spatial_max_deviation: dev,
        distance_to_analytic: dist,
        events,
    };
    Ok((field, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub floors: Vec<f64>,
    pub window: (f64, f64),
    /// Points must exceed `signal_factor` times their floor to enter a fit.
    pub signal_factor: f64,
    pub exponential: std::result::Result<RateFit, String>,
    pub polynomial: std::result::Result<RateFit, String>,
    /// Weighted initial distance `||f0 - f_inf||_{m_alpha}` when requested.
    pub initial_weighted_distance: Option<f64>,
    pub reference_is_exact: bool,
}

impl RateReport {
    /// Over times in `window`: the smallest `distance * (1 + t)^alpha` and
    /// the smallest ratio `distance / floor`.
    pub fn polynomial_lower_bound(&self, window: (f64, f64), alpha: f64) -> Option<(f64, f64)> {
        let pts: Vec<(f64, f64, f64)> = self
            .times
            .iter()
            .zip(&self.distances)
            .zip(&self.floors)
            .filter(|((t, _), _)| **t >= window.0 && **t <= window.1)
            .map(|((t, d), f)| (*t, *d, *f))
            .collect();
        if pts.is_empty() {
            return None;
        }
        let product = pts.iter().map(|(t, d, _)| d * (1.0 + t).powf(alpha)).fold(f64::INFINITY, f64::min);
        let ratio = pts
            .iter()
            .map(|(_, d, f)| if *f > 0.0 { d / f } else { f64::INFINITY })
            .fold(f64::INFINITY, f64::min);
        Some((product, ratio))
    }
}

/// Distance to the steady state along an ensemble run, with exponential
/// and polynomial fits over `window`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_curve(
    system: &System,
    initial: &InitialLaw,
    run: &RunSettings,
    grid: &PhaseGrid,
    times: &[f64],
    reference: Option<&EmpiricalField>,
    window: (f64, f64),
    signal_factor: f64,
) -> Result<RateReport> {
    let analytic;
    let reference = match reference {
        Some(r) => r,
        None => {
            let theta = system.analytic_equilibrium_temperature().ok_or_else(|| {
                Error::Unsupported("no explicit steady state for this configuration; pass a reference field".into())
            })?;
            analytic = EmpiricalField::uniform_maxwellian(grid.clone(), theta)?;
            &analytic
        }
    };
    let mut settings = EnsembleSettings::new(run.particles, run.seed, times.to_vec(), grid.clone());
    settings.workers = run.workers;
    let snaps = simulate_ensemble(system, initial, &settings)?;
    let mut distances = Vec::with_capacity(times.len());
    let mut floors = Vec::with_capacity(times.len());
    for s in &snaps {
        let d = l1_distance(&s.field, reference)?;
        distances.push(d.value);
        floors.push(d.floor);
    }
    let scaled: Vec<f64> = floors.iter().map(|f| f * signal_factor).collect();
    let fit = |mode| fit_rate(times, &distances, Some(&scaled), mode, window).map_err(|e| e.to_string());
    Ok(RateReport {
        times: times.to_vec(),
        exponential: fit(FitMode::Exponential),
        polynomial: fit(FitMode::Polynomial),
        distances,
        floors,
        window,
        signal_factor,
        initial_weighted_distance: None,
        reference_is_exact: reference.effective_samples.is_none(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEntry {
    pub law: String,
    pub horizon: f64,
    pub initial_norm: f64,
    pub final_norm: f64,
    /// Trapezoid estimate of the time integral in the inequality.
    pub integral: f64,
    pub mass: f64,
    /// `(LHS - ||f||_{m_alpha}) / ((1 + T) ||f||_{L1})`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub alpha: f64,
    /// `"exponential"` when the rate is bounded below, `"subgeometric"` otherwise.
    pub form: String,
    pub sigma0: f64,
    pub entries: Vec<LyapunovEntry>,
    /// Per law: max ratio over min ratio across horizons.
    pub drift: Vec<(String, f64)>,
    pub max_drift: f64,
    pub passed: bool,
}

/// Audits the weighted-norm drift inequality for each initial law.
pub fn lyapunov_audit(
    system: &System,
    laws: &[(String, InitialLaw)],
    spec: &WeightSpec,
    horizons: &[f64],
    step: f64,
    run: &RunSettings,
    grid: &PhaseGrid,
    drift_limit: f64,
) -> Result<LyapunovReport> {
    if horizons.is_empty() || !(step > 0.0) {
        return Err(invalid("experiment.horizons", "need horizons and a positive step"));
    }
    let t_max = horizons.iter().cloned().fold(0.0, f64::max);
    let steps = (t_max / step).round() as usize;
    let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * step).collect();
    for &h in horizons {
        if !times.iter().any(|t| (t - h).abs() < 1e-12) {
            times.push(h);
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let sigma0 = system.collision.rate.inf();
    let exponential = sigma0 > 0.0;
    let tracked = vec![*spec, spec.with_alpha(spec.alpha - 1.0)];
    let mut entries = Vec::new();
    let mut drift = Vec::new();
    for (k, (name, law)) in laws.iter().enumerate() {
        let mut settings = EnsembleSettings::new(run.particles, run.seed.wrapping_add(k as u64), times.clone(), grid.clone());
        settings.workers = run.workers;
        settings.tracked = tracked.clone();
        let snaps = simulate_ensemble(system, law, &settings)?;
        let norm = |i: usize| snaps[i].field.weighted_norm(0);
        let integrand = |i: usize| {
            if exponential {
                sigma0 * snaps[i].field.weighted_norm(0)
            } else {
                spec.alpha * snaps[i].field.weighted_norm(1)
            }
        };
        let initial_norm = norm(0);
        let mass = snaps[0].field.mass();
        let mut integral = 0.0;
        let mut ratios = Vec::new();
        for i in 1..snaps.len() {
            integral += 0.5 * (snaps[i].time - snaps[i - 1].time) * (integrand(i) + integrand(i - 1));
            let t = snaps[i].time;
            if horizons.iter().any(|h| (h - t).abs() < 1e-12) {
                let lhs = norm(i) + integral;
                let ratio = (lhs - initial_norm) / ((1.0 + t) * mass);
                ratios.push(ratio);
                entries.push(LyapunovEntry {
                    law: name.clone(),
                    horizon: t,
                    initial_norm,
                    final_norm: norm(i),
                    integral,
                    mass,
                    ratio,
                });
            }
        }
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let d = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        drift.push((name.clone(), d));
    }
    let max_drift = drift.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    Ok(LyapunovReport {
        alpha: spec.alpha,
        form: if exponential { "exponential" } else { "subgeometric" }.into(),
        sigma0,
        entries,
        drift,
        max_drift,
        passed: max_drift < drift_limit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxReport {
    pub times: Vec<f64>,
    /// Accumulated wall hits per unit initial mass, i.e. the time integral
    /// of the outgoing flux (restricted to speeds up to `speed_cap`).
    pub cumulative_flux: Vec<f64>,
    pub speed_cap: f64,
    pub slope: f64,
    pub intercept: f64,
    /// Quadratic coefficient of a least-squares quadratic fit.
    pub curvature: f64,
    /// `curvature * T^2` relative to the final accumulated flux.
    pub relative_superlinear: f64,
    pub passed: bool,
}

/// Accumulated boundary flux against time, with affine and quadratic fits.
/// CL walls count hits with incoming speed at most `speed_cap`; Maxwell
/// walls count all hits.
pub fn flux_audit(
    system: &System,
    initial: &InitialLaw,
    run: &RunSettings,
    times: &[f64],
    speed_cap: f64,
    tolerance: f64,
) -> Result<FluxReport> {
    let cap = match system.wall {
        WallModel::Maxwell { .. } => f64::INFINITY,
        WallModel::CercignaniLampis { .. } => speed_cap,
    };
    let grid = PhaseGrid::for_domain(&system.domain, 1, 1);
    let mut settings = EnsembleSettings::new(run.particles, run.seed, times.to_vec(), grid);
    settings.workers = run.workers;
    settings.flux_speed_cap = cap;
    let snaps = simulate_ensemble(system, initial, &settings)?;
    let n = run.particles as f64;
    let flux: Vec<f64> = snaps.iter().map(|s| s.events.capped_wall_hits as f64 / n).collect();
    let (intercept, slope) = linear_fit(times, &flux);
    let curvature = quadratic_coefficient(times, &flux);
    let t_max = times.last().cloned().unwrap_or(0.0);
    let last = flux.last().cloned().unwrap_or(0.0);
    let relative = if last > 0.0 { curvature * t_max * t_max / last } else { 0.0 };
    Ok(FluxReport {
        times: times.to_vec(),
        cumulative_flux: flux,
        speed_cap: cap,
        slope,
        intercept,
        curvature,
        relative_superlinear: relative,
        passed: relative <= tolerance,
    })
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

/// Coefficient `c` of the least-squares fit `y = a + b x + c x^2`.
fn quadratic_coefficient(x: &[f64], y: &[f64]) -> f64 {
    let mut m = nalgebra::Matrix3::<f64>::zeros();
    let mut r = nalgebra::Vector3::<f64>::zeros();
    for (&a, &b) in x.iter().zip(y) {
        let row = nalgebra::Vector3::new(1.0, a, a * a);
        m += row * row.transpose();
        r += row * b;
    }
    m.lu().solve(&r).map_or(0.0, |c| c[2])
}

/// One cell of the start cover: polar cell in space times a speed/angle
/// cell in velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartCell {
    pub radius: (f64, f64),
    pub angle: (f64, f64),
    pub speed: (f64, f64),
    pub heading: (f64, f64),
    pub center_weight: f64,
}

impl StartCell {
    fn center(&self) -> PhaseState {
        let r = (0.5 * (self.radius.0.powi(2) + self.radius.1.powi(2))).sqrt();
        let a = 0.5 * (self.angle.0 + self.angle.1);
        let s = 0.5 * (self.speed.0 + self.speed.1);
        let h = 0.5 * (self.heading.0 + self.heading.1);
        PhaseState::new(Vec3::new(r * a.cos(), r * a.sin(), 0.0), Vec3::new(s * h.cos(), s * h.sin(), 0.0))
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PhaseState {
        let r2 = rng.gen_range(self.radius.0.powi(2)..self.radius.1.powi(2));
        let a = rng.gen_range(self.angle.0..self.angle.1);
        let s = rng.gen_range(self.speed.0..self.speed.1);
        let h = rng.gen_range(self.heading.0..self.heading.1);
        let r = r2.sqrt();
        PhaseState::new(Vec3::new(r * a.cos(), r * a.sin(), 0.0), Vec3::new(s * h.cos(), s * h.sin(), 0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoeblinSettings {
    pub lambda: f64,
    pub horizons: Vec<f64>,
    pub starts_per_cell: usize,
    /// Rings and sectors of the spatial start cover.
    pub start_rings: usize,
    pub start_sectors: usize,
    /// Speed band edges of the velocity start cover.
    pub start_speeds: Vec<f64>,
    pub start_headings: usize,
    pub arrival_rings: usize,
    pub arrival_sectors: usize,
    pub arrival_velocity_cells: usize,
    pub arrival_vmax: f64,
}

impl Default for DoeblinSettings {
    fn default() -> Self {
        DoeblinSettings {
            lambda: 15.0,
            horizons: vec![5.0, 10.0, 20.0],
            starts_per_cell: 2000,
            start_rings: 2,
            start_sectors: 4,
            start_speeds: vec![0.25, 1.0, 2.0],
            start_headings: 4,
            arrival_rings: 8,
            arrival_sectors: 8,
            arrival_velocity_cells: 8,
            arrival_vmax: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoeblinReport {
    pub lambda: f64,
    /// Smallest weight among candidate start cells.
    pub lambda0: f64,
    pub horizons: Vec<f64>,
    pub start_cells: Vec<StartCell>,
    /// Per horizon: minimum over arrival cells and start cells of the
    /// empirical density.
    pub floors: Vec<f64>,
    /// Per horizon: number of arrival cells reached by every start cell.
    pub covered_cells: Vec<usize>,
    pub arrival_cells: usize,
    pub best_horizon: Option<f64>,
    pub best_floor: f64,
    /// Arrival densities (min over starts) at the best horizon.
    pub best_profile: Vec<f64>,
    pub observed: bool,
}

/// Empirical minorization probe: bundles of particles from every start cell
/// inside the weight sublevel set are advanced to each horizon and binned on
/// the arrival grid; the floor is the smallest density over arrival cells
/// and starts.
pub fn doeblin_probe(system: &System, settings: &DoeblinSettings, spec: &WeightSpec, run: &RunSettings) -> Result<DoeblinReport> {
    let radius = match system.domain.shape() {
        Shape::Disk { radius } => *radius,
        _ => return Err(Error::Unsupported("the minorization probe is implemented for the disk".into())),
    };
    if settings.start_speeds.len() < 2 || settings.horizons.is_empty() {
        return Err(invalid("experiment.start_speeds", "need at least two speed edges and one horizon"));
    }
    let tau = 2.0 * std::f64::consts::PI;
    let mut candidates = Vec::new();
    for i in 0..settings.start_rings {
        for j in 0..settings.start_sectors {
            for w in settings.start_speeds.windows(2) {
                for h in 0..settings.start_headings {
                    let cell = StartCell {
                        radius: (
                            radius * (i as f64 / settings.start_rings as f64).sqrt(),
                            radius * ((i + 1) as f64 / settings.start_rings as f64).sqrt(),
                        ),
                        angle: (tau * j as f64 / settings.start_sectors as f64, tau * (j + 1) as f64 / settings.start_sectors as f64),
                        speed: (w[0], w[1]),
                        heading: (tau * h as f64 / settings.start_headings as f64, tau * (h + 1) as f64 / settings.start_headings as f64),
                        center_weight: 0.0,
                    };
                    let c = cell.center();
                    let m1 = spec.with_alpha(1.0).weight(&system.domain, &c.x, &c.v);
                    candidates.push(StartCell { center_weight: m1, ..cell });
                }
            }
        }
    }
    let lambda0 = candidates.iter().map(|c| c.center_weight).fold(f64::INFINITY, f64::min);
    let starts: Vec<StartCell> = candidates.into_iter().filter(|c| c.center_weight <= settings.lambda).collect();
    if starts.is_empty() {
        return Err(invalid("experiment.lambda", format!("sublevel set is empty on the start grid (lambda0 = {lambda0})")));
    }
    let grid = PhaseGrid::new(
        SpatialGrid::Polar {
            radius,
            rings: settings.arrival_rings,
            sectors: settings.arrival_sectors,
        },
        VelocityGrid {
            dim: 2,
            vmax: settings.arrival_vmax,
            cells: settings.arrival_velocity_cells,
        },
    );
    let n_arrival = grid.cells();
    let nh = settings.horizons.len();
    let per = settings.starts_per_cell;
    let chunks_per_start = per.div_ceil(CHUNK_SIZE);
    let n_chunks = starts.len() * chunks_per_start;
    // counts[start][horizon][cell]
    let init = vec![vec![vec![0u32; n_arrival]; nh]; starts.len()];
    let work = |chunk: usize| -> Result<(usize, Vec<Vec<u32>>)> {
        let s = chunk / chunks_per_start;
        let lo = (chunk % chunks_per_start) * CHUNK_SIZE;
        let hi = (lo + CHUNK_SIZE).min(per);
        let mut counts = vec![vec![0u32; n_arrival]; nh];
        for p in lo..hi {
            let mut rng = particle_rng(run.seed, (s * per + p) as u64);
            let mut state = starts[s].sample(&mut rng);
            let mut now = 0.0;
            for (k, &t) in settings.horizons.iter().enumerate() {
                let (next, _) = advance_particle(system, state, t - now, f64::INFINITY, &mut rng, &mut ());
                state = next;
                now = t;
                if let Some(j) = grid.velocity.locate(&state.v) {
                    counts[k][grid.spatial.locate(&state.x) * grid.velocity.len() + j] += 1;
                }
            }
        }
        Ok((s, counts))
    };
    let counts = ordered_chunks(run.workers, n_chunks, init, work, |acc, (s, part)| {
        for (a, b) in acc[s].iter_mut().zip(part) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    })?;
    let vcell = grid.velocity.spacing().powi(2);
    let mut floors = Vec::with_capacity(nh);
    let mut covered = Vec::with_capacity(nh);
    let mut profiles = Vec::with_capacity(nh);
    for k in 0..nh {
        let profile: Vec<f64> = (0..n_arrival)
            .map(|c| {
                let vol = grid.spatial.volume(c / grid.velocity.len()) * vcell;
                let min_count = counts.iter().map(|per_start| per_start[k][c]).min().unwrap_or(0);
                min_count as f64 / per as f64 / vol
            })
            .collect();
        floors.push(profile.iter().cloned().fold(f64::INFINITY, f64::min));
        covered.push(profile.iter().filter(|d| **d > 0.0).count());
        profiles.push(profile);
    }
    let best = floors
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
        .map(|(k, _)| k)
        .expect("nonempty");
    let observed = floors[best] > 0.0;
    Ok(DoeblinReport {
        lambda: settings.lambda,
        lambda0,
        horizons: settings.horizons.clone(),
        start_cells: starts,
        floors: floors.clone(),
        covered_cells: covered,
        arrival_cells: n_arrival,
        best_horizon: observed.then(|| settings.horizons[best]),
        best_floor: floors[best],
        best_profile: profiles.swap_remove(best),
        observed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleEntry {
    pub time: f64,
    pub eps: f64,
    /// Quadrature value of the lower-bound integral.
    pub lhs: f64,
    pub distance: f64,
    pub floor: f64,
    /// Estimate of `||f_eps - f_inf||_{m_alpha}`.
    pub initial_weighted_distance: f64,
    /// `distance / initial_weighted_distance`.
    pub decay: f64,
    /// `lhs * eps^alpha / decay`, the smallest admissible constant.
    pub implied_constant: f64,
    /// `decay * (1 + t)^alpha`.
    pub scaled_decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub alpha: f64,
    /// Half the distance from the origin to the wall.
    pub r_in: f64,
    pub hole_radius: f64,
    pub sigma_inf: f64,
    /// Estimate of `sup f_inf` from the largest histogram cell density;
    /// cell averaging biases it low.
    pub h0_estimate: f64,
    /// Monte Carlo estimate of `||f_inf||_{m_alpha}`.
    pub steady_weighted_norm: f64,
    pub entries: Vec<CounterexampleEntry>,
    pub max_implied_constant: f64,
    pub min_scaled_decay: f64,
}

/// Concentrated initial data in a disk or ball with a collisionless hole
/// around the origin: quadrature of the lower-bound integral against the
/// simulated decay with `eps = 1/(t + 1)`.
pub fn counterexample_run(
    system: &System,
    alpha: f64,
    times: &[f64],
    run: &RunSettings,
    grid: &PhaseGrid,
) -> Result<CounterexampleReport> {
    let (hole_radius, sigma_inf) = match &system.collision.rate {
        RateField::Hole {
            sigma_inf,
            center,
            radius,
        } if center.norm() == 0.0 => (*radius, *sigma_inf),
        _ => return Err(Error::Unsupported("the counterexample needs a hole rate field centred at the origin".into())),
    };
    let big = match system.domain.shape() {
        Shape::Disk { radius } | Shape::Ball { radius } => *radius,
        _ => return Err(Error::Unsupported("the counterexample needs a disk or ball".into())),
    };
    let r_in = 0.5 * big;
    if !(r_in > hole_radius) {
        return Err(invalid("geometry.radius", "half the wall distance must exceed the hole radius"));
    }
    let theta = system
        .analytic_equilibrium_temperature()
        .ok_or_else(|| Error::Unsupported("the counterexample needs an explicit steady state".into()))?;
    let reference = EmpiricalField::uniform_maxwellian(grid.clone(), theta)?;
    let vcell = grid.velocity.spacing().powi(system.dim() as i32);
    let h0 = (0..grid.spatial.len())
        .flat_map(|s| (0..grid.velocity.len()).map(move |j| (s, j)))
        .map(|(s, j)| reference.cell_mass(s, j) / (grid.spatial.volume(s) * vcell))
        .fold(0.0, f64::max);
    let spec = WeightSpec::for_wall(alpha, crate::measures::DEFAULT_DELTA, &system.wall, &system.domain)?;
    let steady_norm = weighted_norm_mc(system, &InitialLaw::uniform_maxwellian(theta), &spec, run.particles, run.seed ^ 0x5eed)?;
    let mut entries = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let eps = 1.0 / (t + 1.0);
        let law = InitialLaw::concentrated(eps);
        let lhs = counterexample_lhs(&system.domain, &system.collision.rate, eps, t, r_in, h0)?;
        let mut settings = EnsembleSettings::new(run.particles, run.seed.wrapping_add(k as u64), vec![t], grid.clone());
        settings.workers = run.workers;
        let snaps = simulate_ensemble(system, &law, &settings)?;
        let d = l1_distance(&snaps[0].field, &reference)?;
        let initial = weighted_norm_mc(system, &law, &spec, run.particles, run.seed.wrapping_add(1000 + k as u64))? + steady_norm;
        let decay = d.value / initial;
        entries.push(CounterexampleEntry {
            time: t,
            eps,
            lhs,
            distance: d.value,
            floor: d.floor,
            initial_weighted_distance: initial,
            decay,
            implied_constant: lhs * eps.powf(alpha) / decay,
            scaled_decay: decay * (1.0 + t).powf(alpha),
        });
    }
    Ok(CounterexampleReport {
        alpha,
        r_in,
        hole_radius,
        sigma_inf,
        h0_estimate: h0,
        steady_weighted_norm: steady_norm,
        max_implied_constant: entries.iter().map(|e| e.implied_constant).fold(0.0, f64::max),
        min_scaled_decay: entries.iter().map(|e| e.scaled_decay).fold(f64::INFINITY, f64::min),
        entries,
    })
}

/// Plain Monte Carlo estimate of `||f||_{m_alpha}` for an initial law.
pub fn weighted_norm_mc(system: &System, law: &InitialLaw, spec: &WeightSpec, samples: usize, seed: u64) -> Result<f64> {
    let grid = PhaseGrid::for_domain(&system.domain, 1, 1);
    let mut settings = EnsembleSettings::new(samples, seed, vec![0.0], grid);
    settings.tracked = vec![*spec];
    let snaps = simulate_ensemble(system, law, &settings)?;
    Ok(snaps[0].field.weighted_norm(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelResidual {
    pub theta: f64,
    pub r_perp: f64,
    pub r_par: f64,
    pub speed: f64,
    pub total: f64,
    pub residual: f64,
    pub quadrature_error: f64,
}

/// Flux normalization of the CL kernel over a parameter grid, at the point
/// `(0, -1)` of the unit disk with incidence 40 degrees off the normal.
pub fn verify_kernel(thetas: &[f64], r_perps: &[f64], r_pars: &[f64], speeds: &[f64]) -> Result<Vec<KernelResidual>> {
    let domain = Domain::disk(1.0)?;
    let x = Vec3::new(0.0, -1.0, 0.0);
    let n = domain.outward_normal(&x)?;
    let t = tangent_basis(&n, 2)[0];
    let a = 40f64.to_radians();
    let mut out = Vec::new();
    for &theta in thetas {
        for &rp in r_perps {
            for &rq in r_pars {
                for &speed in speeds {
                    let wall = WallModel::cercignani_lampis(rp, rq, BoundaryField::Constant(theta))?;
                    let u = speed * (a.cos() * n + a.sin() * t);
                    let c = wall.kernel_normalization_check(&domain, &x, &u)?;
                    out.push(KernelResidual {
                        theta,
                        r_perp: rp,
                        r_par: rq,
                        speed,
                        total: c.total,
                        residual: c.total - 1.0,
                        quadrature_error: c.quadrature_error,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// The parameter grid used by [`verify_kernel`] by default.
pub fn default_kernel_grid() -> [Vec<f64>; 4] {
    [
        vec![0.25, 1.0, 4.0],
        vec![0.1, 0.5, 1.0],
        vec![0.2, 1.0, 1.8],
        vec![0.1, 1.0, 10.0],
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub samples: usize,
}

/// Chi-square test of `cl_sample` against the flux-weighted `cl_density`
/// on a `bins x bins` histogram of (normal speed, first tangential
/// component). Expected counts come from cell-wise product quadrature;
/// cells with expected count below 5 are pooled.
#[allow(clippy::too_many_arguments)]
pub fn sampler_chi_square(
    dim: usize,
    n: &Vec3,
    theta: f64,
    r_perp: f64,
    r_par: f64,
    u: &Vec3,
    samples: usize,
    bins: usize,
    seed: u64,
) -> Result<ChiSquareResult> {
    let window = cl_window(dim, n, theta, r_perp, r_par, u);
    let basis = tangent_basis(n, dim);
    // Histogram range: 6 standard deviations, inside the quadrature window.
    let shrink = |(lo, hi): (f64, f64), floor: f64| {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo) * 6.0 / crate::wall::TRUNCATION_WIDTHS;
        ((mid - half).max(floor), mid + half)
    };
    let s_range = shrink(window.speed, 0.0);
    let w_range = shrink(window.tangential[0], f64::NEG_INFINITY);
    let hs = (s_range.1 - s_range.0) / bins as f64;
    let hw = (w_range.1 - w_range.0) / bins as f64;
    let mut expected = vec![0.0; bins * bins];
    for i in 0..bins {
        for j in 0..bins {
            let mut cell = window.clone();
            cell.speed = (s_range.0 + i as f64 * hs, s_range.0 + (i + 1) as f64 * hs);
            cell.tangential[0] = (w_range.0 + j as f64 * hw, w_range.0 + (j + 1) as f64 * hw);
            expected[i * bins + j] =
                flux_quadrature(dim, n, &cell, 1e-10, |v| cl_density(dim, n, theta, r_perp, r_par, u, v)).0;
        }
    }
    let inside: f64 = expected.iter().sum();
    let mut observed = vec![0.0; bins * bins];
    let mut outside = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let v = cl_sample(dim, n, theta, r_perp, r_par, u, &mut rng);
        let s = -v.dot(n);
        let w = v.dot(&basis[0]);
        let i = ((s - s_range.0) / hs).floor();
        let j = ((w - w_range.0) / hw).floor();
        if i >= 0.0 && j >= 0.0 && (i as usize) < bins && (j as usize) < bins {
            observed[i as usize * bins + j as usize] += 1.0;
        } else {
            outside += 1.0;
        }
    }
    let nf = samples as f64;
    let mut pairs: Vec<(f64, f64)> = observed.into_iter().zip(expected.iter().map(|p| p * nf)).collect();
    pairs.push((outside, (1.0 - inside).max(0.0) * nf));
    let (mut stat, mut used) = (0.0, 0usize);
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (o, e) in pairs {
        if e < 5.0 {
            pool_o += o;
            pool_e += e;
        } else {
            stat += (o - e).powi(2) / e;
            used += 1;
        }
    }
    if pool_e >= 5.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e;
        used += 1;
    } else if pool_o > 0.0 {
        // Observations where almost no mass is expected: fold into the
        // statistic against a floor of one expected count.
        stat += (pool_o - pool_e).powi(2) / pool_e.max(1.0);
        used += 1;
    }
    let dof = used.saturating_sub(1).max(1);
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::Unsupported(e.to_string()))?;
    Ok(ChiSquareResult {
        statistic: stat,
        dof,
        p_value: 1.0 - chi.cdf(stat),
        samples,
    })
}
