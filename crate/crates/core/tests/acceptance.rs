//! Acceptance gate. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each; exits nonzero if any fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use kinwall::collision::{CollisionModel, RateField};
use kinwall::config::RunConfig;
use kinwall::experiments::{self, DoeblinSettings, RunSettings};
use kinwall::geometry::{Domain, LevelSetPreset, Vec3};
use kinwall::measures::{bracket, PhaseGrid, WeightSpec};
use kinwall::runner::{run, Command};
use kinwall::transport::{
    killed_survival_quadrature, simulate_ensemble, simulate_killed, EnsembleSettings, InitialLaw, SpatialLaw, System,
    VelocityLaw,
};
use kinwall::wall::{BoundaryField, WallModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn cl(r_perp: f64, r_par: f64) -> WallModel {
    WallModel::cercignani_lampis(r_perp, r_par, BoundaryField::Constant(1.0)).unwrap()
}

fn bgk_system(domain: Domain, wall: WallModel, rate: RateField) -> System {
    let dim = domain.dim();
    System::new(domain, wall, CollisionModel::bgk(rate, dim).unwrap()).unwrap()
}

fn run_settings(particles: usize, seed: u64) -> RunSettings {
    RunSettings {
        particles,
        seed,
        workers: 1,
    }
}

fn kernel_normalization() -> Outcome {
    let [t, rp, rq, s] = experiments::default_kernel_grid();
    let rows = experiments::verify_kernel(&t, &rp, &rq, &s).unwrap();
    let worst = rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    outcome(worst <= 1e-6, format!("{} grid points, max |total - 1| = {worst:.2e}", rows.len()))
}

fn sampler_density() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let domain = Domain::disk(1.0).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for k in 0..5 {
        let a = rng.gen_range(0.0..2.0 * PI);
        let x = Vec3::new(a.cos(), a.sin(), 0.0);
        let n = domain.outward_normal(&x).unwrap();
        let tangent = Vec3::new(-n.y, n.x, 0.0);
        let incidence = rng.gen_range(-1.3..1.3f64);
        let speed = rng.gen_range(0.2..4.0);
        let u = speed * (incidence.cos() * n + incidence.sin() * tangent);
        let theta = (rng.gen_range(0.25f64.ln()..4f64.ln())).exp();
        let r_perp = rng.gen_range(0.05..1.0);
        let r_par = rng.gen_range(0.05..1.95);
        let res = experiments::sampler_chi_square(2, &n, theta, r_perp, r_par, &u, 1_000_000, 20, 100 + k).unwrap();
        ok &= res.p_value > 0.01;
        lines.push(format!("p={:.3}", res.p_value));
    }
    outcome(ok, lines.join(" "))
}

fn exact_equilibrium() -> Outcome {
    let system = bgk_system(Domain::disk(1.0).unwrap(), cl(1.0, 1.0), RateField::Constant(1.0));
    let grid = PhaseGrid::for_domain(&system.domain, 8, 8);
    let start = InitialLaw {
        spatial: SpatialLaw::UniformDomain,
        velocity: VelocityLaw::Shell { speed: 2.0 },
    };
    let (_, report) =
        experiments::steady_state(&system, &start, &run_settings(1_000_000, 3), &grid, 40.0, 10.0, 11).unwrap();
    let ks = report.speed_ks.unwrap();
    let dev = report.spatial_max_deviation.unwrap();
    outcome(ks < 0.01 && dev < 0.02, format!("speed KS {ks:.2e}, max polar-cell deviation {:.2}%", 100.0 * dev))
}

fn killed_oracle() -> Outcome {
    let domain = Domain::disk(3.0).unwrap();
    let times = [1.0, 2.0, 5.0];
    let law = InitialLaw::concentrated(1.0);
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, rate) in [
        ("constant", RateField::Constant(0.5)),
        ("hole", RateField::hole(1.0, Vec3::zeros(), 1.0).unwrap()),
    ] {
        let curve = simulate_killed(&domain, &rate, &law, &times, 1_000_000, 4, 1).unwrap();
        for (k, &t) in times.iter().enumerate() {
            let q = killed_survival_quadrature(&domain, &rate, 1.0, t).unwrap();
            let z = (curve.survival[k] - q).abs() / curve.std_errors[k];
            ok &= z < 4.0;
            parts.push(format!("{name} t={t}: {z:.2} SE"));
        }
    }
    outcome(ok, parts.join(", "))
}

fn rate_dichotomy() -> Outcome {
    // (a) rate bounded below
    let system = bgk_system(Domain::disk(1.0).unwrap(), cl(0.5, 0.5), RateField::Constant(1.0));
    let grid = PhaseGrid::for_domain(&system.domain, 4, 8);
    let times: Vec<f64> = (0..=60).map(|k| 0.1 * k as f64).collect();
    let start = InitialLaw {
        spatial: SpatialLaw::UniformBall {
            center: [0.3, 0.0, 0.0],
            radius: 0.3,
        },
        velocity: VelocityLaw::Shell { speed: 2.0 },
    };
    let a = experiments::convergence_curve(&system, &start, &run_settings(2_000_000, 5), &grid, &times, None, (0.5, 6.0), 3.0)
        .unwrap();
    let (ok_a, text_a) = match &a.exponential {
        Ok(fit) => (
            fit.r_squared > 0.98 && fit.rate > 0.0,
            format!("(a) R2 {:.4}, kappa {:.3} over {} points", fit.r_squared, fit.rate, fit.points),
        ),
        Err(e) => (false, format!("(a) fit failed: {e}")),
    };
    // (b) collisionless hole with concentrated data
    let system = bgk_system(
        Domain::disk(3.0).unwrap(),
        cl(1.0, 1.0),
        RateField::hole(1.0, Vec3::zeros(), 1.0).unwrap(),
    );
    let grid = PhaseGrid::for_domain(&system.domain, 4, 8);
    let times: Vec<f64> = (0..=15).map(|k| 10.0 + 2.0 * k as f64).collect();
    let b = experiments::convergence_curve(
        &system,
        &InitialLaw::concentrated(0.1),
        &run_settings(1_000_000, 6),
        &grid,
        &times,
        None,
        (10.0, 40.0),
        3.0,
    )
    .unwrap();
    let (product, signal) = b.polynomial_lower_bound((10.0, 40.0), 1.0).unwrap();
    let ok_b = product > 0.0 && signal >= 5.0;
    outcome(
        ok_a && ok_b,
        format!("{text_a}; (b) min d(1+t) {product:.3}, min d/floor {signal:.1}"),
    )
}

fn lyapunov() -> Outcome {
    let system = bgk_system(Domain::disk(1.0).unwrap(), cl(0.5, 0.5), RateField::Constant(1.0));
    let grid = PhaseGrid::for_domain(&system.domain, 2, 2);
    let spec = WeightSpec::for_wall(1.5, 0.1, &system.wall, &system.domain).unwrap();
    let laws = vec![
        ("maxwellian".to_string(), InitialLaw::uniform_maxwellian(1.0)),
        (
            "shell5".to_string(),
            InitialLaw {
                spatial: SpatialLaw::UniformDomain,
                velocity: VelocityLaw::Shell { speed: 5.0 },
            },
        ),
        (
            "ball2".to_string(),
            InitialLaw {
                spatial: SpatialLaw::UniformDomain,
                velocity: VelocityLaw::UniformBall { radius: 2.0 },
            },
        ),
    ];
    let report =
        experiments::lyapunov_audit(&system, &laws, &spec, &[2.0, 5.0, 10.0, 20.0], 0.25, &run_settings(100_000, 7), &grid, 3.0)
            .unwrap();
    let positive = report.entries.iter().all(|e| e.ratio > 0.0);
    let drifts: Vec<String> = report.drift.iter().map(|(n, d)| format!("{n} {d:.2}")).collect();
    outcome(report.passed && positive, format!("max/min drift: {}", drifts.join(", ")))
}

fn doeblin() -> Outcome {
    let system = bgk_system(Domain::disk(1.0).unwrap(), cl(0.5, 0.5), RateField::Constant(1.0));
    let spec = WeightSpec::for_wall(1.0, 0.1, &system.wall, &system.domain).unwrap();
    let settings = DoeblinSettings {
        starts_per_cell: 300_000,
        ..DoeblinSettings::default()
    };
    let report = experiments::doeblin_probe(&system, &settings, &spec, &run_settings(0, 8)).unwrap();
    let floors: Vec<String> = report
        .horizons
        .iter()
        .zip(&report.floors)
        .zip(&report.covered_cells)
        .map(|((h, f), c)| format!("T={h}: {f:.3e} ({c}/{} cells)", report.arrival_cells))
        .collect();
    outcome(
        report.observed,
        format!("{} start cells, lambda0 {:.2}; {}", report.start_cells.len(), report.lambda0, floors.join(", ")),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut compared = 0;
    for command in [Command::Simulate, Command::Lyapunov] {
        let mut outs = Vec::new();
        for workers in [1, 8] {
            let mut config = RunConfig::default();
            config.simulation.particles = 30_000;
            config.simulation.workers = workers;
            config.collision.sigma.kind = kinwall::config::SigmaKind::Hole;
            config.experiment.lyapunov_horizons = vec![1.0, 2.0];
            let out = dir.path().join(format!("{}-{workers}", command.name()));
            run(command, &config, dir.path(), &out).unwrap();
            outs.push(out);
        }
        let mut names: Vec<_> = std::fs::read_dir(&outs[0])
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .filter(|n| n != "runtime.json")
            .collect();
        names.sort();
        for name in names {
            let a = std::fs::read(outs[0].join(&name)).unwrap();
            let b = std::fs::read(outs[1].join(&name)).unwrap();
            ok &= a == b;
            compared += 1;
        }
    }
    outcome(ok, format!("{compared} files compared between 1 and 8 workers"))
}

fn structural_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = Vec::new();

    // Mass conservation and positivity with walls and collisions active.
    let wall = WallModel::cercignani_lampis(
        0.4,
        1.2,
        BoundaryField::Angular {
            base: 1.0,
            amplitude: 0.3,
            mode: 2,
        },
    )
    .unwrap();
    let system = bgk_system(Domain::disk(1.0).unwrap(), wall, RateField::hole(2.0, Vec3::zeros(), 0.4).unwrap());
    let grid = PhaseGrid::for_domain(&system.domain, 4, 8);
    let settings = EnsembleSettings::new(100_000, 10, vec![0.0, 1.0, 5.0, 20.0], grid);
    let snaps = simulate_ensemble(&system, &InitialLaw::concentrated(0.3), &settings).unwrap();
    if !snaps.iter().all(|s| s.field.deposits == 100_000.0 && s.field.mass() == 1.0) {
        failures.push("mass".to_string());
    }
    if !snaps.iter().all(|s| s.field.is_nonnegative()) {
        failures.push("positivity".to_string());
    }

    let domains = [
        Domain::disk(1.0).unwrap(),
        Domain::ball(1.5).unwrap(),
        Domain::implicit2d(LevelSetPreset::Superellipse {
            exponent: 4.0,
            scale: 1.0,
        })
        .unwrap(),
    ];
    let random_velocity = |rng: &mut ChaCha8Rng, dim: usize| {
        let mut v = Vec3::zeros();
        for k in 0..dim {
            v[k] = rng.sample(StandardNormal);
        }
        v * rng.gen_range(0.1..5.0) / v.norm()
    };

    // Specular involution.
    let mut worst_inv: f64 = 0.0;
    for domain in &domains {
        for _ in 0..100_000 {
            let x = domain.sample_uniform(&mut rng);
            let v = random_velocity(&mut rng, domain.dim());
            let q = domain.footpoint(&x, &v).unwrap();
            let w = domain.specular(&q, &domain.specular(&q, &v).unwrap()).unwrap();
            worst_inv = worst_inv.max((w - v).norm() / v.norm());
        }
    }
    if worst_inv > 1e-12 {
        failures.push(format!("involution {worst_inv:.1e}"));
    }

    // Exit-time cocycle and weight-base transport on the exact shapes.
    let mut worst_cocycle: f64 = 0.0;
    let mut worst_base: f64 = 0.0;
    for domain in &domains[..2] {
        let spec = WeightSpec::new(1.0, 0.1, 0.5, domain.diameter()).unwrap();
        for _ in 0..100_000 {
            let x = domain.sample_uniform(&mut rng);
            let v = random_velocity(&mut rng, domain.dim());
            let tau = domain.exit_time(&x, &v);
            let s = rng.gen_range(0.0..1.0) * tau;
            let y = x + s * v;
            worst_cocycle = worst_cocycle.max((tau - s - domain.exit_time(&y, &v)).abs() / tau.max(1.0));
            let base = spec.base(domain, &x, &v);
            worst_base = worst_base.max((spec.base(domain, &y, &v) - (base - s)).abs() / base.abs().max(1.0));
        }
    }
    if worst_cocycle > 1e-10 {
        failures.push(format!("cocycle {worst_cocycle:.1e}"));
    }
    if worst_base > 1e-10 {
        failures.push(format!("weight base {worst_base:.1e}"));
    }

    // Weight dominates the bracket.
    let mut below = 0usize;
    for i in 0..1_000_000 {
        let domain = &domains[i % 3];
        let wall = if i % 2 == 0 {
            cl(0.5, 0.5)
        } else {
            WallModel::maxwell(BoundaryField::Constant(0.3), BoundaryField::Constant(1.0)).unwrap()
        };
        let spec = WeightSpec::for_wall(1.0, 0.1, &wall, domain).unwrap();
        let x = domain.sample_uniform(&mut rng);
        let v = random_velocity(&mut rng, domain.dim());
        if spec.weight(domain, &x, &v) < bracket(domain, &x, &v, 0.1) {
            below += 1;
        }
    }
    if below > 0 {
        failures.push(format!("m1 < bracket at {below} states"));
    }

    let ok = failures.is_empty();
    outcome(
        ok,
        if ok {
            format!("mass exact, tallies nonnegative, involution {worst_inv:.1e}, cocycle {worst_cocycle:.1e}, base {worst_base:.1e}, m1 >= bracket on 1e6 states")
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let criteria: Vec<(&str, Duration, fn() -> Outcome)> = vec![
        ("1 kernel normalization", Duration::from_secs(60), kernel_normalization),
        ("2 sampler-density agreement", Duration::from_secs(120), sampler_density),
        ("3 exact equilibrium", Duration::from_secs(600), exact_equilibrium),
        ("4 killed-transport oracle", Duration::from_secs(300), killed_oracle),
        ("5 rate dichotomy", Duration::from_secs(1800), rate_dichotomy),
        ("6 Lyapunov audit", Duration::from_secs(600), lyapunov),
        ("7 Doeblin probe", Duration::from_secs(600), doeblin),
        ("8 determinism", Duration::from_secs(600), determinism),
        ("9 structural invariants", Duration::from_secs(120), structural_invariants),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let passed = result.passed && in_time;
        if !passed {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {} [{:.1}s of {}s]",
            if passed { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
