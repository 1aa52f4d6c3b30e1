//! Poincaré sections of the 2DF problem at energy −1.
//!
//! The section is the plane `x1 = α x2` through the homographic ray, with `α`
//! the homographic ratio. Section points use `r = x1 / r_max` and
//! `θ = atan(ẋ1 / (α ẋ2))`, where `x = Q²` and dots are physical time
//! derivatives.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::io::{self, Write};

use nalgebra::SVector;
use rayon::prelude::*;

use crate::dynamics::vf_2df;
use crate::error::{Error, Result};
use crate::integrate::{IntegratorConfig, Stepper};
use crate::model::{gamma_2df_vec, MassRatio, Params, Reg2DFState, Vec4};
use crate::orbit::{rescale_solution, OrbitSolution};

/// Section energy.
pub const SECTION_ENERGY: f64 = -1.0;

const SECTION_NOISE: f64 = 1e-9;

/// `(1+α²)³(mα³−1)² − 64α⁶(1−m)²`.
pub fn alpha_polynomial(alpha: f64, m: f64) -> f64 {
    let a2 = alpha * alpha;
    let a3 = a2 * alpha;
    let s = 1.0 + a2;
    s * s * s * (m * a3 - 1.0).powi(2) - 64.0 * a3 * a3 * (1.0 - m).powi(2)
}

/// Homographic ratio `α(m)`: the root in `(0, 1]` continuous from `α(1) = 1`.
///
/// Bisection runs on the factor `(1+α²)^{3/2}(1−mα³) − 8α³(1−m)` of the
/// polynomial, which is positive at 0 and negative at 1 for `m < 1`.
pub fn solve_alpha(m: MassRatio) -> Result<f64> {
    let m = m.get();
    if m == 1.0 {
        return Ok(1.0);
    }
    let h = |a: f64| (1.0 + a * a).powf(1.5) * (1.0 - m * a * a * a) - 8.0 * a * a * a * (1.0 - m);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    if !(h(lo) > 0.0 && h(hi) < 0.0) {
        return Err(Error::RootNotFound(format!(
            "alpha polynomial has no sign change for m = {m}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if h(lo).abs() < h(hi).abs() { lo } else { hi })
}

/// Largest `x1` on the section at energy −1.
pub fn r_max(m: MassRatio, alpha: f64) -> f64 {
    let m = m.get();
    0.5 + 0.5 * m * m * alpha + 4.0 * m / (1.0 + 1.0 / (alpha * alpha)).sqrt()
}

/// Potential `U(x)` with `H = ẋ1² + mẋ2² − U`.
fn potential(m: f64, x1: f64, x2: f64) -> f64 {
    0.5 / x1 + 0.5 * m * m / x2 + 4.0 * m / x1.hypot(x2)
}

/// Section geometry for one mass ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Section {
    pub m: MassRatio,
    pub alpha: f64,
    pub r_max: f64,
}

impl Section {
    pub fn new(m: MassRatio) -> Result<Self> {
        let alpha = solve_alpha(m)?;
        Ok(Section {
            m,
            alpha,
            r_max: r_max(m, alpha),
        })
    }

    pub fn params(&self) -> Params {
        Params::new(self.m, SECTION_ENERGY)
    }

    /// `x1 − α x2`.
    pub fn g(&self, z: &Vec4) -> f64 {
        z[0] * z[0] - self.alpha * z[1] * z[1]
    }

    /// Regularized state on the section at energy −1 with coordinates `(r, θ)`.
    pub fn lift(&self, r: f64, theta: f64) -> Result<Reg2DFState> {
        if !(r > 0.0 && r < 1.0) || !theta.is_finite() {
            return Err(Error::Infeasible(format!(
                "seed (r, θ) = ({r}, {theta}) outside 0 < r < 1"
            )));
        }
        let m = self.m.get();
        let x1 = r * self.r_max;
        let x2 = x1 / self.alpha;
        let kinetic = potential(m, x1, x2) - 1.0;
        if kinetic < 0.0 {
            return Err(Error::Infeasible(format!(
                "U − 1 = {kinetic} < 0 at r = {r}"
            )));
        }
        let (sn, cs) = theta.sin_cos();
        let rho = (kinetic / (self.alpha * self.alpha * sn * sn + m * cs * cs)).sqrt();
        let (xd1, xd2) = (rho * self.alpha * sn, rho * cs);
        let (q1, q2) = (x1.sqrt(), x2.sqrt());
        Ok(Reg2DFState::new(q1, q2, 4.0 * q1 * xd1, 4.0 * m * q2 * xd2))
    }

    /// `(r, θ)` of a state on the section, `θ ∈ [−π/2, π/2]`.
    pub fn coords(&self, z: &Reg2DFState) -> Result<(f64, f64)> {
        if z.q1 == 0.0 || z.q2 == 0.0 {
            return Err(Error::domain(
                "section coordinates undefined at a collision",
            ));
        }
        let xd1 = z.p1 / (4.0 * z.q1);
        let xd2 = z.p2 / (4.0 * self.m.get() * z.q2);
        let r = z.q1 * z.q1 / self.r_max;
        let theta = if xd2 == 0.0 {
            if xd1 == 0.0 {
                return Err(Error::domain("section coordinates undefined at rest"));
            }
            FRAC_PI_2.copysign(xd1)
        } else {
            (xd1 / (self.alpha * xd2)).atan()
        };
        Ok((r, theta))
    }

    /// `|H + 1|` of a regularized state, `Γ / (Q1²Q2²)`.
    pub fn energy_error(&self, z: &Vec4) -> Result<f64> {
        Ok((gamma_2df_vec(z, &self.params())? / (z[0] * z[0] * z[1] * z[1])).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionConfig {
    pub m: MassRatio,
    pub r_count: usize,
    pub r_range: (f64, f64),
    pub theta_count: usize,
    pub theta_range: (f64, f64),
    pub max_crossings: usize,
    pub guard: f64,
    /// Regularized-time horizon per seed.
    pub s_max: f64,
    pub skip_homographic: bool,
    pub integrator: IntegratorConfig,
}

impl SectionConfig {
    pub fn new(m: MassRatio) -> Self {
        SectionConfig {
            m,
            r_count: 9,
            r_range: (0.1, 0.9),
            theta_count: 15,
            theta_range: (-7.0 * PI / 16.0, 7.0 * PI / 16.0),
            max_crossings: 200,
            guard: 1000.0,
            s_max: 5000.0,
            skip_homographic: true,
            integrator: IntegratorConfig {
                max_steps: 5_000_000,
                ..IntegratorConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (r0, r1) = self.r_range;
        let (t0, t1) = self.theta_range;
        let ok = self.r_count >= 1
            && self.theta_count >= 1
            && 0.0 < r0
            && r0 <= r1
            && r1 < 1.0
            && -FRAC_PI_2 < t0
            && t0 <= t1
            && t1 < FRAC_PI_2
            && self.max_crossings >= 1
            && self.guard > 0.0
            && self.s_max > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "section grid must lie in (0,1) x (-π/2,π/2) with positive counts".into(),
            ))
        }
    }

    fn axis(count: usize, (lo, hi): (f64, f64)) -> Vec<f64> {
        if count == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect()
    }

    pub fn r_values(&self) -> Vec<f64> {
        Self::axis(self.r_count, self.r_range)
    }

    pub fn theta_values(&self) -> Vec<f64> {
        Self::axis(self.theta_count, self.theta_range)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxCrossings,
    Escaped,
    Horizon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionSeries {
    pub seed: (f64, f64),
    pub crossings: Vec<(f64, f64)>,
    pub escaped: bool,
    pub crossings_found: usize,
    pub stop: StopReason,
    /// Largest `|x1 − αx2|` over recorded crossings.
    pub max_section_defect: f64,
    /// Largest `|H + 1|` over recorded crossings.
    pub max_energy_error: f64,
    pub s_end: f64,
}

impl SectionSeries {
    /// `max r − min r` over the crossings.
    pub fn r_extent(&self) -> f64 {
        let (lo, hi) = self
            .crossings
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (r, _)| {
                (lo.min(*r), hi.max(*r))
            });
        if self.crossings.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }
}

/// Integrates from an arbitrary regularized start and records every
/// transversal crossing of the section, in both directions.
pub fn iterate_from_state(
    section: &Section,
    seed: (f64, f64),
    z0: Vec4,
    max_crossings: usize,
    guard: f64,
    s_max: f64,
    cfg: &IntegratorConfig,
) -> Result<SectionSeries> {
    let params = section.params();
    let mut icfg = *cfg;
    icfg.guard = guard;
    let mut st = Stepper::new(move |_s, z: &Vec4| vf_2df(z, &params), 0.0, z0, icfg)?;
    let g = |_s: f64, z: &Vec4| section.g(z);
    // values of g within round-off of the section carry no sign
    let signed = |z: &Vec4| {
        let g = section.g(z);
        if g.abs() <= SECTION_NOISE * (z[0] * z[0] + section.alpha * z[1] * z[1]) {
            0.0
        } else {
            g
        }
    };
    let mut g_prev = signed(&z0);
    let mut series = SectionSeries {
        seed,
        crossings: Vec::new(),
        escaped: false,
        crossings_found: 0,
        stop: StopReason::Horizon,
        max_section_defect: 0.0,
        max_energy_error: 0.0,
        s_end: 0.0,
    };
    while st.s() < s_max {
        let step = st.step(s_max)?;
        let g_now = signed(st.state());
        if g_prev * g_now < 0.0 {
            let hit = st.locate(&step, &g, g_prev, 1e-13)?;
            let state = Reg2DFState::from_vector(&hit.state);
            let (r, theta) = section.coords(&state)?;
            series.max_section_defect = series.max_section_defect.max(section.g(&hit.state).abs());
            series.max_energy_error = series
                .max_energy_error
                .max(section.energy_error(&hit.state)?);
            series.crossings.push((r, theta));
            if series.crossings.len() >= max_crossings {
                series.stop = StopReason::MaxCrossings;
                break;
            }
        }
        if step.escaped {
            series.escaped = true;
            series.stop = StopReason::Escaped;
            break;
        }
        if g_now != 0.0 {
            g_prev = g_now;
        }
    }
    series.crossings_found = series.crossings.len();
    series.s_end = st.s();
    Ok(series)
}

/// Section map iterates of the seed `(r, θ)`.
pub fn iterate_section(seed: (f64, f64), cfg: &SectionConfig) -> Result<SectionSeries> {
    let section = Section::new(cfg.m)?;
    let z0 = section.lift(seed.0, seed.1)?.to_vector();
    iterate_from_state(
        &section,
        seed,
        z0,
        cfg.max_crossings,
        cfg.guard,
        cfg.s_max,
        &cfg.integrator,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeOutcome {
    Series(SectionSeries),
    Skipped(String),
    Failed(Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridNode {
    pub r: f64,
    pub theta: f64,
    pub outcome: NodeOutcome,
}

/// Runs every grid seed in parallel; the homographic line `θ = π/4` is
/// skipped unless disabled.
pub fn grid_sweep(cfg: &SectionConfig) -> Result<Vec<GridNode>> {
    cfg.validate()?;
    let section = Section::new(cfg.m)?;
    let seeds: Vec<(f64, f64)> = cfg
        .r_values()
        .into_iter()
        .flat_map(|r| cfg.theta_values().into_iter().map(move |t| (r, t)))
        .collect();
    Ok(seeds
        .par_iter()
        .map(|&(r, theta)| {
            let outcome = if cfg.skip_homographic && (theta - FRAC_PI_4).abs() < 1e-12 {
                NodeOutcome::Skipped("homographic line".into())
            } else {
                match section.lift(r, theta) {
                    Err(e) => NodeOutcome::Skipped(e.to_string()),
                    Ok(z) => match iterate_from_state(
                        &section,
                        (r, theta),
                        z.to_vector(),
                        cfg.max_crossings,
                        cfg.guard,
                        cfg.s_max,
                        &cfg.integrator,
                    ) {
                        Ok(s) => NodeOutcome::Series(s),
                        Err(e) => NodeOutcome::Failed(e),
                    },
                }
            };
            GridNode { r, theta, outcome }
        })
        .collect())
}

pub const CSV_HEADER: &str = "seed_r,seed_theta,crossing_index,r,theta,escaped_flag";

/// One row per recorded crossing.
pub fn write_csv<W: Write>(nodes: &[GridNode], mut out: W) -> io::Result<usize> {
    writeln!(out, "{CSV_HEADER}")?;
    let mut rows = 0;
    for node in nodes {
        if let NodeOutcome::Series(s) = &node.outcome {
            for (i, (r, t)) in s.crossings.iter().enumerate() {
                writeln!(
                    out,
                    "{:.16e},{:.16e},{},{:.16e},{:.16e},{}",
                    s.seed.0,
                    s.seed.1,
                    i + 1,
                    r,
                    t,
                    u8::from(s.escaped)
                )?;
                rows += 1;
            }
        }
    }
    Ok(rows)
}

/// First section crossing of a periodic orbit after rescaling it to energy −1.
pub fn periodic_trace(sol: &OrbitSolution, cfg: &IntegratorConfig) -> Result<(Vec4, (f64, f64))> {
    if !(sol.energy < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "orbit energy {} is not negative",
            sol.energy
        )));
    }
    let scaled = rescale_solution(sol, (sol.energy / SECTION_ENERGY).sqrt())?;
    let section = Section::new(scaled.m)?;
    let params = section.params();
    let mut st = Stepper::new(
        move |_s, z: &Vec4| vf_2df(z, &params),
        0.0,
        scaled.initial_state().to_vector(),
        *cfg,
    )?;
    let g = |_s: f64, z: &Vec4| section.g(z);
    let mut g_prev = section.g(st.state());
    while st.s() < scaled.period {
        let step = st.step(scaled.period)?;
        let g_now = section.g(st.state());
        if g_prev * g_now < 0.0 {
            let hit = st.locate(&step, &g, g_prev, 1e-13)?;
            let coords = section.coords(&Reg2DFState::from_vector(&hit.state))?;
            return Ok((hit.state, coords));
        }
        g_prev = g_now;
    }
    Err(Error::NoEvent {
        horizon: scaled.period,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomographicDrift {
    /// Largest `|x1/x2 − α|` over the accepted steps.
    pub ratio_defect: f64,
    pub s_reached: f64,
    /// Physical time elapsed, `∫ x1 x2 ds`.
    pub t_reached: f64,
}

/// Follows the homographic lift at radius `r` for regularized time `s_span`,
/// tracking the drift of `x1/x2` away from `α`.
pub fn homographic_drift(
    m: MassRatio,
    r: f64,
    s_span: f64,
    cfg: &IntegratorConfig,
) -> Result<HomographicDrift> {
    let section = Section::new(m)?;
    let z = section.lift(r, FRAC_PI_4)?.to_vector();
    let params = section.params();
    let y0 = SVector::<f64, 5>::new(z[0], z[1], z[2], z[3], 0.0);
    let rhs = move |_s: f64, y: &SVector<f64, 5>| {
        let z = Vec4::new(y[0], y[1], y[2], y[3]);
        let v = vf_2df(&z, &params)?;
        Ok(SVector::<f64, 5>::new(
            v[0],
            v[1],
            v[2],
            v[3],
            y[0] * y[0] * y[1] * y[1],
        ))
    };
    let mut icfg = *cfg;
    icfg.guard_dims = 4;
    let mut st = Stepper::new(rhs, 0.0, y0, icfg)?;
    let ratio = |y: &SVector<f64, 5>| (y[0] * y[0]) / (y[1] * y[1]);
    let mut worst = (ratio(&y0) - section.alpha).abs();
    while st.s() < s_span {
        let step = st.step(s_span)?;
        worst = worst.max((ratio(st.state()) - section.alpha).abs());
        if step.escaped {
            break;
        }
    }
    Ok(HomographicDrift {
        ratio_defect: worst,
        s_reached: st.s(),
        t_reached: st.state()[4],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mass(m: f64) -> MassRatio {
        MassRatio::new(m).unwrap()
    }

    #[test]
    fn alpha_endpoints() {
        assert_eq!(solve_alpha(mass(1.0)).unwrap(), 1.0);
        let a = solve_alpha(mass(1e-6)).unwrap();
        assert!((a - 1.0 / 3f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn alpha_residual_on_grid() {
        for i in 1..=100 {
            let m = i as f64 / 100.0;
            let a = solve_alpha(mass(m)).unwrap();
            assert!(a > 0.577 && a <= 1.0);
            assert!(alpha_polynomial(a, m).abs() < 1e-12, "m = {m}");
        }
    }

    #[test]
    fn r_max_values() {
        assert!((r_max(mass(1.0), 1.0) - (1.0 + 2.0 * 2f64.sqrt())).abs() < 1e-14);
        let tiny = mass(1e-12);
        assert!((r_max(tiny, solve_alpha(tiny).unwrap()) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn homographic_seed_is_on_the_ray() {
        let sec = Section::new(mass(0.5)).unwrap();
        let z = sec.lift(0.4, FRAC_PI_4).unwrap();
        let xd1 = z.p1 / (4.0 * z.q1);
        let xd2 = z.p2 / (4.0 * 0.5 * z.q2);
        assert!((xd1 - sec.alpha * xd2).abs() < 1e-14);
        assert!(sec.g(&z.to_vector()).abs() < 1e-14);
    }

    #[test]
    fn lift_round_trip_and_energy() {
        for &m in &[1.0, 0.5, 0.1] {
            let sec = Section::new(mass(m)).unwrap();
            for &r in &[0.1, 0.5, 0.9] {
                for &t in &[0.1, 0.7, 1.4] {
                    let z = sec.lift(r, t).unwrap();
                    let (r2, t2) = sec.coords(&z).unwrap();
                    assert!((r - r2).abs() < 1e-10 && (t - t2).abs() < 1e-10);
                    assert!(sec.energy_error(&z.to_vector()).unwrap() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rest_state_near_r_max() {
        let sec = Section::new(mass(0.7)).unwrap();
        let z = sec.lift(1.0 - 1e-12, FRAC_PI_4).unwrap();
        assert!(z.p1.abs() < 1e-5 && z.p2.abs() < 1e-5);
        assert!(sec.lift(1.0, 0.3).is_err());
    }

    #[test]
    fn coordinate_special_cases() {
        let sec = Section::new(mass(1.0)).unwrap();
        let x1 = sec.r_max / 2.0;
        let q = x1.sqrt();
        let (r, t) = sec.coords(&Reg2DFState::new(q, q, 0.0, 1.0)).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
        assert_eq!(t, 0.0);
        let (_, t) = sec.coords(&Reg2DFState::new(q, q, 1.0, 0.0)).unwrap();
        assert_eq!(t, FRAC_PI_2);
        assert!(sec.coords(&Reg2DFState::new(q, q, 0.0, 0.0)).is_err());
    }

    #[test]
    fn grid_axes_hit_homographic_line() {
        let cfg = SectionConfig::new(mass(1.0));
        let t = cfg.theta_values();
        assert_eq!(t.len(), 15);
        assert!((t[11] - FRAC_PI_4).abs() < 1e-12);
        assert!((t[3] + FRAC_PI_4).abs() < 1e-12);
        assert_eq!(cfg.r_values().len(), 9);
        let mut bad = cfg;
        bad.r_range = (0.0, 0.5);
        assert!(bad.validate().is_err());
    }
}
