use kinwall::collision::{CollisionModel, RateField};
use kinwall::geometry::{Domain, PhaseState, Vec3};
use kinwall::measures::{PhaseGrid, WeightSpec};
use kinwall::transport::*;
use kinwall::wall::{BoundaryField, WallModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Exp};

fn disk_system(sigma: f64, wall: WallModel) -> System {
    let domain = Domain::disk(1.0).unwrap();
    System::new(domain, wall, CollisionModel::bgk(RateField::Constant(sigma), 2).unwrap()).unwrap()
}

fn cl11() -> WallModel {
    WallModel::cercignani_lampis(1.0, 1.0, BoundaryField::Constant(1.0)).unwrap()
}

#[test]
fn pure_drift_without_wall_or_collision() {
    let sys = disk_system(0.0, cl11());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = PhaseState::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.1, 0.0, 0.0));
    let (out, ev) = advance_particle(&sys, s, 1.0, f64::INFINITY, &mut rng, &mut ());
    assert!((out.x - Vec3::new(0.1, 0.0, 0.0)).norm() < 1e-15);
    assert_eq!(out.v, s.v);
    assert_eq!(ev.wall_hits + ev.collisions, 0);
}

#[test]
fn specular_stub_conserves_speed() {
    let sys = disk_system(0.0, WallModel::specular_stub(BoundaryField::Constant(1.0)));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = PhaseState::new(Vec3::new(0.2, -0.3, 0.0), Vec3::new(1.3, 0.7, 0.0));
    let speed = s.v.norm();
    let (out, ev) = advance_particle(&sys, s, 100.0, f64::INFINITY, &mut rng, &mut ());
    assert!(ev.wall_hits > 10);
    assert!((out.v.norm() - speed).abs() < 1e-10);
    assert!(sys.domain.contains(&out.x));
}

#[test]
fn collision_count_matches_rate() {
    let sys = disk_system(1.0, cl11());
    let n = 4000;
    let mut total = 0.0;
    let mut sq = 0.0;
    for i in 0..n {
        let mut rng = particle_rng(3, i);
        let s = InitialLaw::uniform_maxwellian(1.0).sample(&sys.domain, &mut rng);
        let (_, ev) = advance_particle(&sys, s, 10.0, f64::INFINITY, &mut rng, &mut ());
        total += ev.collisions as f64;
        sq += (ev.collisions as f64).powi(2);
    }
    let mean = total / n as f64;
    let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - 10.0).abs() < 4.0 * se, "mean {mean} se {se}");
}

#[test]
fn inter_collision_times_are_exponential() {
    struct Times(Vec<f64>, f64);
    impl EventObserver for Times {
        fn flight(&mut self, _x: &Vec3, _v: &Vec3, d: f64) {
            self.1 += d;
        }
        fn collision(&mut self, _x: &Vec3, _b: &Vec3, _a: &Vec3) {
            self.0.push(self.1);
            self.1 = 0.0;
        }
    }
    let sys = disk_system(2.0, cl11());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut obs = Times(Vec::new(), 0.0);
    let s = PhaseState::new(Vec3::zeros(), Vec3::new(0.5, 0.5, 0.0));
    advance_particle(&sys, s, 2000.0, f64::INFINITY, &mut rng, &mut obs);
    let mut t = obs.0;
    t.remove(0);
    t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let law = Exp::new(2.0).unwrap();
    let n = t.len() as f64;
    let ks = t
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let c = law.cdf(*x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 1.63 / n.sqrt(), "ks {ks} with {n} samples");
}

#[test]
fn ensemble_conserves_mass_and_tallies_everything() {
    let sys = disk_system(1.0, cl11());
    let grid = PhaseGrid::for_domain(&sys.domain, 4, 8);
    let settings = EnsembleSettings::new(10_000, 5, vec![0.0, 1.0, 3.0], grid);
    let snaps = simulate_ensemble(&sys, &InitialLaw::uniform_maxwellian(1.0), &settings).unwrap();
    for s in &snaps {
        assert_eq!(s.field.deposits, 10_000.0);
        assert!((s.field.mass() - 1.0).abs() < 1e-12);
        assert!(s.field.is_nonnegative());
    }
    assert!(snaps[2].events.collisions >= snaps[1].events.collisions);
}

#[test]
fn worker_count_does_not_change_results() {
    let wall = WallModel::cercignani_lampis(0.5, 0.7, BoundaryField::Constant(1.3)).unwrap();
    let sys = disk_system(0.8, wall);
    let grid = PhaseGrid::for_domain(&sys.domain, 4, 8);
    let mut a = EnsembleSettings::new(20_000, 6, vec![0.5, 2.0], grid);
    a.tracked = vec![WeightSpec::for_wall(1.0, 0.1, &sys.wall, &sys.domain).unwrap()];
    let mut b = a.clone();
    b.workers = 8;
    let ra = simulate_ensemble(&sys, &InitialLaw::concentrated(0.5), &a).unwrap();
    let rb = simulate_ensemble(&sys, &InitialLaw::concentrated(0.5), &b).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn killed_exact_examples() {
    let domain = Domain::disk(3.0).unwrap();
    let law = InitialLaw::concentrated(1.0);
    let rate = RateField::Constant(0.5);
    // Starts at the origin of f_1 after one unit of flight.
    let v = Vec3::new(0.5, 0.0, 0.0);
    let x = Vec3::new(0.5, 0.0, 0.0);
    let got = killed_transport_exact(&domain, &rate, &law, 1.0, &x, &v).unwrap();
    let expect = (-0.5f64).exp() / std::f64::consts::PI.powi(2);
    assert!((got - expect).abs() < 1e-14);
    // Backward characteristic leaves the support.
    let far = killed_transport_exact(&domain, &rate, &law, 1.0, &Vec3::new(2.9, 0.0, 0.0), &v).unwrap();
    assert_eq!(far, 0.0);
}

#[test]
fn killed_survival_quadrature_matches_simulation() {
    let domain = Domain::disk(3.0).unwrap();
    let rates = [RateField::Constant(0.3), RateField::hole(1.0, Vec3::zeros(), 1.0).unwrap()];
    for rate in &rates {
        let times = [0.5, 2.0];
        let curve = simulate_killed(&domain, rate, &InitialLaw::concentrated(1.0), &times, 100_000, 7, 2).unwrap();
        for (k, &t) in times.iter().enumerate() {
            let q = killed_survival_quadrature(&domain, rate, 1.0, t).unwrap();
            let diff = (curve.survival[k] - q).abs();
            assert!(diff < 4.0 * curve.std_errors[k] + 1e-9, "t {t}: mc {} quad {q}", curve.survival[k]);
        }
    }
}

#[test]
fn counterexample_lhs_agrees_with_monte_carlo() {
    let domain = Domain::disk(3.0).unwrap();
    let rate = RateField::hole(1.0, Vec3::zeros(), 1.0).unwrap();
    let (eps, t, r_in, h0) = (1.0 / 6.0, 5.0, 1.5, 0.2);
    let q = counterexample_lhs(&domain, &rate, eps, t, r_in, h0).unwrap();
    let law = InitialLaw::concentrated(eps);
    let corr = eps.powi(4) * std::f64::consts::PI.powi(2) * h0;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 1_000_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let st = law.sample(&domain, &mut rng);
        let g = if t * st.v.norm() > r_in - eps {
            0.0
        } else {
            ((-rate.path_integral(&st.x, &st.v, t)).exp() - corr).max(0.0)
        };
        s += g;
        s2 += g * g;
    }
    let mean = s / n as f64;
    let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - q).abs() < 4.0 * se + 1e-9, "mc {mean} quad {q} se {se}");
}

#[test]
fn duhamel_check_accepts_engine_with_collisions() {
    let sys = disk_system(1.0, cl11());
    let grid = PhaseGrid::for_domain(&sys.domain, 4, 6);
    let mut settings = EnsembleSettings::new(200_000, 9, vec![1.0, 1.5], grid);
    settings.keep_states = true;
    let snaps = simulate_ensemble(&sys, &InitialLaw::concentrated(0.5), &settings).unwrap();
    let report = duhamel_lower_bound_check(&sys, &snaps[0], &snaps[1], 4.0).unwrap();
    assert!(report.cells_checked > 10);
    assert!(report.violations.is_empty(), "{:?}", report.violations);
}

#[test]
fn duhamel_check_is_exact_for_free_flight_and_flags_corruption() {
    // Small support and short times: no particle reaches the wall.
    let sys = disk_system(0.0, cl11());
    let grid = PhaseGrid::for_domain(&sys.domain, 8, 8);
    let mut settings = EnsembleSettings::new(100_000, 11, vec![0.1, 0.3], grid);
    settings.keep_states = true;
    let snaps = simulate_ensemble(&sys, &InitialLaw::concentrated(0.2), &settings).unwrap();
    assert_eq!(snaps[1].events.wall_hits, 0);
    let report = duhamel_lower_bound_check(&sys, &snaps[0], &snaps[1], 4.0).unwrap();
    assert!(report.violations.is_empty());
    let mut bad = snaps[1].clone();
    let (idx, _) = bad
        .field
        .cells
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    bad.field.cells[idx] *= 0.8;
    let flagged = duhamel_lower_bound_check(&sys, &snaps[0], &bad, 4.0).unwrap();
    assert_eq!(flagged.violations.len(), 1);
    assert_eq!(flagged.violations[0].0, idx);
}

#[test]
fn weight_base_decreases_at_unit_rate_along_flights() {
    let sys = disk_system(0.0, cl11());
    let spec = WeightSpec::for_wall(1.0, 0.1, &sys.wall, &sys.domain).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut log = FlightLog::default();
    let s = PhaseState::new(Vec3::new(0.1, 0.2, 0.0), Vec3::new(0.9, -0.4, 0.0));
    advance_particle(&sys, s, 20.0, f64::INFINITY, &mut rng, &mut log);
    assert!(log.segments.len() > 5);
    for (x, v, d) in &log.segments {
        for frac in [0.25, 0.5, 0.75] {
            let s = frac * d;
            let y = x + s * v;
            let lhs = spec.base(&sys.domain, &y, v);
            let rhs = spec.base(&sys.domain, x, v) - s;
            assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
        }
    }
}

#[test]
fn analytic_equilibrium_detection() {
    assert_eq!(disk_system(1.0, cl11()).analytic_equilibrium_temperature(), Some(1.0));
    assert_eq!(disk_system(0.0, WallModel::diffuse(BoundaryField::Constant(2.0)).unwrap()).analytic_equilibrium_temperature(), Some(2.0));
    let hot = WallModel::diffuse(BoundaryField::Constant(2.0)).unwrap();
    assert_eq!(disk_system(1.0, hot).analytic_equilibrium_temperature(), None);
}

#[test]
fn invalid_settings_are_rejected() {
    let sys = disk_system(1.0, cl11());
    let grid = PhaseGrid::for_domain(&sys.domain, 2, 2);
    let law = InitialLaw::uniform_maxwellian(1.0);
    assert!(simulate_ensemble(&sys, &law, &EnsembleSettings::new(10, 1, vec![2.0, 1.0], grid.clone())).is_err());
    assert!(simulate_ensemble(&sys, &law, &EnsembleSettings::new(0, 1, vec![1.0], grid)).is_err());
}
