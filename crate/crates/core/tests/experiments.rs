use kinwall::collision::{CollisionModel, RateField};
use kinwall::config::RunConfig;
use kinwall::experiments::{self, DoeblinSettings, RunSettings};
use kinwall::geometry::{Domain, Vec3};
use kinwall::measures::{PhaseGrid, WeightSpec};
use kinwall::transport::{InitialLaw, SpatialLaw, System, VelocityLaw};
use kinwall::wall::{BoundaryField, WallModel};

fn disk_system(r_perp: f64, r_par: f64, rate: RateField) -> System {
    let wall = WallModel::cercignani_lampis(r_perp, r_par, BoundaryField::Constant(1.0)).unwrap();
    System::new(Domain::disk(1.0).unwrap(), wall, CollisionModel::bgk(rate, 2).unwrap()).unwrap()
}

fn run(particles: usize, seed: u64) -> RunSettings {
    RunSettings {
        particles,
        seed,
        workers: 2,
    }
}

fn equilibrium() -> InitialLaw {
    InitialLaw {
        spatial: SpatialLaw::UniformDomain,
        velocity: VelocityLaw::Maxwellian { theta: 1.0 },
    }
}

#[test]
fn kernel_grid_is_normalized() {
    let [a, b, c, d] = experiments::default_kernel_grid();
    let rows = experiments::verify_kernel(&a, &b, &c, &d).unwrap();
    assert_eq!(rows.len(), 81);
    assert!(rows.iter().all(|r| r.residual.abs() < 1e-8 && (r.total - 1.0).abs() < 1e-8));
}

#[test]
fn sampler_histogram_matches_density() {
    let n = Vec3::new(1.0, 0.0, 0.0);
    let u = Vec3::new(0.8, 0.6, 0.0);
    let res = experiments::sampler_chi_square(2, &n, 1.3, 0.4, 0.7, &u, 200_000, 24, 11).unwrap();
    assert!(res.p_value > 1e-4, "{res:?}");
    assert!(res.dof > 10);
}

#[test]
fn steady_state_reaches_analytic_maxwellian() {
    let system = disk_system(1.0, 1.0, RateField::Constant(1.0));
    let grid = PhaseGrid::for_domain(&system.domain, 2, 6);
    let start = InitialLaw {
        spatial: SpatialLaw::UniformDomain,
        velocity: VelocityLaw::Shell { speed: 2.0 },
    };
    let (field, report) = experiments::steady_state(&system, &start, &run(40_000, 3), &grid, 8.0, 2.0, 3).unwrap();
    assert_eq!(report.analytic_theta, Some(1.0));
    assert!(report.speed_ks.unwrap() < 0.02, "{report:?}");
    assert!((field.mass() - 1.0).abs() < 1e-12);
    assert!(!report.unconverged);
}

#[test]
fn convergence_curve_decays() {
    let system = disk_system(0.5, 0.5, RateField::Constant(1.0));
    let grid = PhaseGrid::for_domain(&system.domain, 2, 6);
    let start = InitialLaw {
        spatial: SpatialLaw::UniformBall {
            center: [0.3, 0.0, 0.0],
            radius: 0.3,
        },
        velocity: VelocityLaw::Shell { speed: 2.0 },
    };
    let times = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0];
    let report = experiments::convergence_curve(&system, &start, &run(50_000, 4), &grid, &times, None, (0.0, 3.0), 1.0).unwrap();
    assert!(report.reference_is_exact);
    assert_eq!(report.distances.len(), times.len());
    assert!(report.distances[0] > 1.0);
    assert!(report.distances[5] < 0.3 * report.distances[0]);
}

#[test]
fn flux_is_linear_at_equilibrium() {
    let system = disk_system(0.5, 0.5, RateField::Constant(1.0));
    let times: Vec<f64> = (1..=10).map(|k| k as f64).collect();
    let report = experiments::flux_audit(&system, &equilibrium(), &run(20_000, 5), &times, 8.0, 0.05).unwrap();
    assert!(report.passed, "{report:?}");
    assert!(report.slope > 0.0);
}

#[test]
fn lyapunov_audit_reports_every_horizon() {
    let system = disk_system(0.5, 0.5, RateField::Constant(1.0));
    let spec = WeightSpec::for_wall(1.5, 0.1, &system.wall, &system.domain).unwrap();
    let grid = PhaseGrid::for_domain(&system.domain, 1, 2);
    let laws = vec![("maxwellian".to_string(), equilibrium())];
    let report = experiments::lyapunov_audit(&system, &laws, &spec, &[1.0, 2.0], 0.25, &run(5_000, 6), &grid, 3.0).unwrap();
    assert_eq!(report.entries.len(), 2);
    assert!(report.entries.iter().all(|e| e.ratio.is_finite()));
    assert!(report.max_drift >= 1.0);
}

#[test]
fn doeblin_probe_small_run_is_consistent() {
    let system = disk_system(0.5, 0.5, RateField::Constant(1.0));
    let spec = WeightSpec::for_wall(1.0, 0.1, &system.wall, &system.domain).unwrap();
    let settings = DoeblinSettings {
        horizons: vec![2.0, 4.0],
        starts_per_cell: 200,
        ..DoeblinSettings::default()
    };
    let report = experiments::doeblin_probe(&system, &settings, &spec, &run(0, 7)).unwrap();
    assert_eq!(report.floors.len(), 2);
    assert!(report.lambda >= report.lambda0);
    assert!(!report.start_cells.is_empty());
    assert!(report.floors.iter().all(|f| *f >= 0.0));
}

#[test]
fn counterexample_entries_are_consistent() {
    let wall = WallModel::cercignani_lampis(1.0, 1.0, BoundaryField::Constant(1.0)).unwrap();
    let domain = Domain::disk(3.0).unwrap();
    let rate = RateField::hole(1.0, Vec3::zeros(), 1.0).unwrap();
    let system = System::new(domain, wall, CollisionModel::bgk(rate, 2).unwrap()).unwrap();
    let grid = PhaseGrid::for_domain(&system.domain, 2, 4);
    let report = experiments::counterexample_run(&system, 1.0, &[1.0, 3.0], &run(20_000, 8), &grid).unwrap();
    assert_eq!(report.entries.len(), 2);
    assert_eq!(report.r_in, 1.5);
    for e in &report.entries {
        assert!((e.eps - 1.0 / (e.time + 1.0)).abs() < 1e-15);
        assert!(e.lhs > 0.0 && e.lhs <= 1.0);
        assert!(e.implied_constant.is_finite());
    }
}

#[test]
fn default_config_builds_a_system() {
    let cfg = RunConfig::default();
    let system = cfg.system(std::path::Path::new(".")).unwrap();
    assert_eq!(system.domain.dim(), 2);
    assert!(cfg.weight_spec(&system.domain).is_ok());
}
