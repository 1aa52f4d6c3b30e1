use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use rhomb::integrate::{integrate, integrate_until, Direction, EventSpec, IntegratorConfig};
use rhomb::model::{gamma_2df, Params, Reg2DFState, Vec4};
use rhomb::orbit::{
    closure, continue_in_mass, fit_orbit, rescale_solution, residual, shooting_oracle,
    symmetry_residuals, FitConfig, OrbitSolution, ShootConfig,
};
use rhomb::MassRatio;

// Regression constants for the 2π-normalized equal-mass orbit.
const ZETA_M1: f64 = 2.7916343279;
const ENERGY_M1: f64 = -0.4195514129;

fn mass(m: f64) -> MassRatio {
    MassRatio::new(m).unwrap()
}

fn shot_m1() -> &'static OrbitSolution {
    static CELL: OnceLock<OrbitSolution> = OnceLock::new();
    CELL.get_or_init(|| {
        shooting_oracle(mass(1.0), None, &ShootConfig::default())
            .unwrap()
            .solution
    })
}

fn fit_m1() -> &'static OrbitSolution {
    static CELL: OnceLock<OrbitSolution> = OnceLock::new();
    CELL.get_or_init(|| {
        let shot = shot_m1();
        fit_orbit(shot.m, shot.energy, &shot.model, &FitConfig::default()).unwrap()
    })
}

#[test]
fn shooting_bootstrap_finds_equal_mass_orbit() {
    let s = shot_m1();
    assert!((s.zeta - ZETA_M1).abs() < 1e-9, "zeta {}", s.zeta);
    assert!((s.energy - ENERGY_M1).abs() < 1e-9, "E {}", s.energy);
    assert!(s.period_residual < 1e-8);
}

#[test]
fn quarter_period_state_is_mass_m_collision() {
    let s = shot_m1();
    let params = s.params();
    let cfg = IntegratorConfig::default();
    let traj = integrate(
        |_t, z: &Vec4| rhomb::dynamics::vf_2df(z, &params),
        s.initial_state().to_vector(),
        FRAC_PI_2,
        &cfg,
    )
    .unwrap();
    let z = traj.last().1;
    assert!(z[1].abs() < 1e-8 && z[2].abs() < 1e-8);
    assert!((z[3].abs() - 8f64.sqrt()).abs() < 1e-8);
}

#[test]
fn fit_and_shooting_agree_at_equal_masses() {
    let (f, s) = (fit_m1(), shot_m1());
    assert!((f.zeta - s.zeta).abs() < 1e-7, "{} vs {}", f.zeta, s.zeta);
    assert!(
        (f.energy - s.energy).abs() < 1e-7,
        "{} vs {}",
        f.energy,
        s.energy
    );
    assert!(f.period_residual < 1e-8);
    let z0 = f.model.eval(0.0);
    assert!(z0.q1 == 0.0 && z0.p2 == 0.0);
    assert!((z0.p1 - 8f64.sqrt()).abs() < 1e-8);
}

#[test]
fn converged_model_has_small_spectrally_accurate_residual() {
    let f = fit_m1();
    let params = f.params();
    let r512 = residual(&f.model, &params, 512).unwrap();
    let r1024 = residual(&f.model, &params, 1024).unwrap();
    assert!(r512 < 1e-10, "{r512}");
    assert!((r512 - r1024).abs() < 1e-12);
    assert!(f.model.decay_orders() > 3.0);
}

#[test]
fn reversing_symmetries_hold() {
    let sym = symmetry_residuals(fit_m1(), 64, &IntegratorConfig::default()).unwrap();
    assert!(sym.half < 1e-7 && sym.full < 1e-7, "{sym:?}");
}

#[test]
fn q2_event_marks_quarter_period() {
    let f = fit_m1();
    let params = f.params();
    let ev = EventSpec::new(|_s, z: &Vec4| z[1], Direction::Falling, 1e-13);
    let hit = integrate_until(
        |_t, z: &Vec4| rhomb::dynamics::vf_2df(z, &params),
        f.initial_state().to_vector(),
        &ev,
        10.0,
        &IntegratorConfig::default(),
    )
    .unwrap();
    assert!((hit.s - FRAC_PI_2).abs() < 1e-6);
    assert!(hit.state[1].abs() < 1e-9);
}

#[test]
fn gamma_is_conserved_over_one_period() {
    let f = fit_m1();
    let params = f.params();
    let traj = integrate(
        |_t, z: &Vec4| rhomb::dynamics::vf_2df(z, &params),
        f.initial_state().to_vector(),
        f.period,
        &IntegratorConfig::default(),
    )
    .unwrap();
    let drift = traj
        .states
        .iter()
        .map(|z| {
            gamma_2df(&Reg2DFState::from_vector(z), &params)
                .unwrap()
                .abs()
        })
        .fold(0.0, f64::max);
    assert!(drift < 1e-9, "{drift}");
    let (end_s, end) = traj.last();
    assert_eq!(end_s, f.period);
    assert!((end - traj.states[0]).amax() < 1e-8);
}

#[test]
fn rescaled_orbit_stays_periodic_and_symmetric() {
    let r = rescale_solution(fit_m1(), 2.0).unwrap();
    let cfg = IntegratorConfig::default();
    let (defect, _) = closure(&r.params(), r.zeta, r.period, &cfg).unwrap();
    assert!(defect < 1e-8);
    let sym = symmetry_residuals(&r, 32, &cfg).unwrap();
    assert!(sym.half < 1e-7 && sym.full < 1e-7);
    assert!(rescale_solution(fit_m1(), 0.0).is_err());
}

#[test]
fn half_mass_shooting_closes() {
    let s = shooting_oracle(mass(0.5), None, &ShootConfig::default())
        .unwrap()
        .solution;
    assert!(s.period_residual < 1e-8);
    let params = Params::new(s.m, s.energy);
    let (defect, _) = closure(&params, s.zeta, s.period, &IntegratorConfig::default()).unwrap();
    assert!(defect < 1e-8);
    assert!(s.energy < 0.0 && s.zeta > 0.0);
}

#[test]
fn continuation_to_same_mass_returns_seed() {
    let seed = fit_m1().clone();
    let c = continue_in_mass(seed.clone(), 1.0, 0.01, &FitConfig::default()).unwrap();
    assert_eq!(c.solutions, vec![seed]);
    assert!(c.failure.is_none());
}

#[test]
fn short_continuation_is_monotone() {
    let c = continue_in_mass(fit_m1().clone(), 0.97, 0.01, &FitConfig::default()).unwrap();
    assert!(c.failure.is_none());
    let ms: Vec<f64> = c.solutions.iter().map(|s| s.m.get()).collect();
    assert_eq!(ms, vec![1.0, 0.99, 0.98, 0.97]);
    for w in c.solutions.windows(2) {
        assert!(w[1].zeta > w[0].zeta);
        assert!(w[1].energy > w[0].energy);
        assert!(w[1].period_residual < 1e-8);
    }
}
