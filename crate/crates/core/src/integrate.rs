//! Adaptive Runge-Kutta-Fehlberg 4(5) integration with sign-change event
//! location.
//!
//! The embedded pair estimates the local error as the difference between the
//! fourth- and fifth-order solutions; the fifth-order solution is propagated.
//! Events are located by bisecting single RKF substeps taken from the start of
//! the accepted step that brackets the sign change, so the main trajectory is
//! never perturbed by event refinement.

use nalgebra::{SMatrix, SVector};

use crate::dynamics::{variational_rhs_2df, variational_rhs_4df, VariationalState};
use crate::error::{Error, Result};
use crate::model::Params;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Escape bound on `|y_i|` for the first `guard_dims` components.
    pub guard: f64,
    pub guard_dims: usize,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            h_init: 1e-3,
            h_min: 1e-14,
            h_max: 0.5,
            guard: 1000.0,
            guard_dims: usize::MAX,
            max_steps: 50_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.abs_tol = tol;
        self.rel_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.abs_tol > 0.0
            && self.rel_tol > 0.0
            && self.h_min > 0.0
            && self.h_min <= self.h_init
            && self.h_init <= self.h_max
            && self.guard > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "integrator config violates 0 < h_min <= h_init <= h_max, tol > 0: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Rising,
    Falling,
    Both,
}

impl Direction {
    fn accepts(self, before: f64, after: f64) -> bool {
        match self {
            Direction::Rising => before < 0.0 && after > 0.0,
            Direction::Falling => before > 0.0 && after < 0.0,
            Direction::Both => before * after < 0.0,
        }
    }
}

/// Event function `g(s, y)`.
pub type EventFn<'a, const N: usize> = Box<dyn Fn(f64, &SVector<f64, N>) -> f64 + 'a>;

/// Scalar event `g(s, y) = 0` with a crossing direction.
pub struct EventSpec<'a, const N: usize> {
    pub g: EventFn<'a, N>,
    pub direction: Direction,
    pub refine_tol: f64,
}

impl<'a, const N: usize> EventSpec<'a, N> {
    pub fn new(
        g: impl Fn(f64, &SVector<f64, N>) -> f64 + 'a,
        direction: Direction,
        refine_tol: f64,
    ) -> Self {
        EventSpec {
            g: Box::new(g),
            direction,
            refine_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<const N: usize> {
    pub s: Vec<f64>,
    pub states: Vec<SVector<f64, N>>,
    /// Integration stopped early because a coordinate exceeded the guard.
    pub escaped: bool,
}

impl<const N: usize> Trajectory<N> {
    pub fn last(&self) -> (f64, &SVector<f64, N>) {
        let i = self.s.len() - 1;
        (self.s[i], &self.states[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventHit<const N: usize> {
    pub s: f64,
    pub state: SVector<f64, N>,
}

// Fehlberg coefficients
const C2: f64 = 1.0 / 4.0;
const C3: f64 = 3.0 / 8.0;
const C4: f64 = 12.0 / 13.0;
const C6: f64 = 1.0 / 2.0;
const A21: f64 = 1.0 / 4.0;
const A31: f64 = 3.0 / 32.0;
const A32: f64 = 9.0 / 32.0;
const A41: f64 = 1932.0 / 2197.0;
const A42: f64 = -7200.0 / 2197.0;
const A43: f64 = 7296.0 / 2197.0;
const A51: f64 = 439.0 / 216.0;
const A52: f64 = -8.0;
const A53: f64 = 3680.0 / 513.0;
const A54: f64 = -845.0 / 4104.0;
const A61: f64 = -8.0 / 27.0;
const A62: f64 = 2.0;
const A63: f64 = -3544.0 / 2565.0;
const A64: f64 = 1859.0 / 4104.0;
const A65: f64 = -11.0 / 40.0;
const B1: f64 = 16.0 / 135.0;
const B3: f64 = 6656.0 / 12825.0;
const B4: f64 = 28561.0 / 56430.0;
const B5: f64 = -9.0 / 50.0;
const B6: f64 = 2.0 / 55.0;
const E1: f64 = 1.0 / 360.0;
const E3: f64 = -128.0 / 4275.0;
const E4: f64 = -2197.0 / 75240.0;
const E5: f64 = 1.0 / 50.0;
const E6: f64 = 2.0 / 55.0;

/// One RKF45 trial step: fifth-order solution and the embedded error vector.
fn rkf_step<const N: usize, F>(
    f: &F,
    s: f64,
    y: &SVector<f64, N>,
    k1: &SVector<f64, N>,
    h: f64,
) -> Result<(SVector<f64, N>, SVector<f64, N>)>
where
    F: Fn(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    let k2 = f(s + C2 * h, &(y + k1 * (A21 * h)))?;
    let k3 = f(s + C3 * h, &(y + (k1 * A31 + k2 * A32) * h))?;
    let k4 = f(s + C4 * h, &(y + (k1 * A41 + k2 * A42 + k3 * A43) * h))?;
    let k5 = f(
        s + h,
        &(y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * h),
    )?;
    let k6 = f(
        s + C6 * h,
        &(y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * h),
    )?;
    let y5 = y + (k1 * B1 + k3 * B3 + k4 * B4 + k5 * B5 + k6 * B6) * h;
    let err = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6) * h;
    Ok((y5, err))
}

fn error_norm<const N: usize>(
    cfg: &IntegratorConfig,
    y: &SVector<f64, N>,
    y_new: &SVector<f64, N>,
    err: &SVector<f64, N>,
) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..N {
        let scale = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
        let r = err[i].abs() / scale;
        if r.is_nan() {
            return f64::INFINITY;
        }
        worst = worst.max(r);
    }
    worst
}

/// Adaptive stepper over `y' = f(s, y)`. Each call to [`Stepper::step`]
/// advances by one accepted step.
pub struct Stepper<const N: usize, F> {
    f: F,
    cfg: IntegratorConfig,
    s: f64,
    y: SVector<f64, N>,
    k1: SVector<f64, N>,
    h: f64,
    steps: usize,
}

/// Outcome of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step<const N: usize> {
    pub s_start: f64,
    pub y_start: SVector<f64, N>,
    pub h: f64,
    pub escaped: bool,
}

impl<const N: usize, F> Stepper<N, F>
where
    F: Fn(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    pub fn new(f: F, s0: f64, y0: SVector<f64, N>, cfg: IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        let k1 = f(s0, &y0)?;
        Ok(Stepper {
            f,
            cfg,
            s: s0,
            y: y0,
            k1,
            h: cfg.h_init,
            steps: 0,
        })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn state(&self) -> &SVector<f64, N> {
        &self.y
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.cfg
    }

    /// Takes one accepted step, never passing `s_stop`.
    pub fn step(&mut self, s_stop: f64) -> Result<Step<N>> {
        if self.steps >= self.cfg.max_steps {
            return Err(Error::NonConvergence {
                method: "rkf45 step budget",
                iterations: self.steps,
                defect: f64::NAN,
                best: None,
            });
        }
        let remaining = s_stop - self.s;
        let mut h = self.h.min(self.cfg.h_max);
        let mut clipped = false;
        if h >= remaining {
            h = remaining;
            clipped = true;
        }
        loop {
            match rkf_step(&self.f, self.s, &self.y, &self.k1, h) {
                Ok((y_new, err)) => {
                    let en = error_norm(&self.cfg, &self.y, &y_new, &err);
                    if en <= 1.0 {
                        let k1_new = match (self.f)(self.s + h, &y_new) {
                            Ok(k) => k,
                            Err(e) => {
                                if h * 0.25 < self.cfg.h_min {
                                    return Err(e);
                                }
                                h *= 0.25;
                                clipped = false;
                                continue;
                            }
                        };
                        let step = Step {
                            s_start: self.s,
                            y_start: self.y,
                            h,
                            escaped: false,
                        };
                        self.s = if clipped { s_stop } else { self.s + h };
                        self.y = y_new;
                        self.k1 = k1_new;
                        self.steps += 1;
                        let factor = if en == 0.0 {
                            5.0
                        } else {
                            (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
                        };
                        // keep the pre-clip step size when the last step was shortened
                        let base = if clipped { self.h.max(h) } else { h };
                        self.h = (base * factor).clamp(self.cfg.h_min, self.cfg.h_max);
                        let escaped = self.escaped();
                        return Ok(Step { escaped, ..step });
                    }
                    let factor = (0.9 * en.powf(-0.25)).clamp(0.1, 0.5);
                    h *= factor;
                    clipped = false;
                }
                Err(e) => {
                    // vector field left its domain inside the trial step
                    if h * 0.25 < self.cfg.h_min {
                        return Err(e);
                    }
                    h *= 0.25;
                    clipped = false;
                    continue;
                }
            }
            if h < self.cfg.h_min {
                return Err(Error::StepUnderflow { s: self.s, h });
            }
        }
    }

    fn escaped(&self) -> bool {
        let k = self.cfg.guard_dims.min(N);
        self.y
            .iter()
            .take(k)
            .any(|v| v.abs() > self.cfg.guard || !v.is_finite())
    }

    /// State reached by a single fifth-order substep of size `tau` from the
    /// start of `step`.
    pub fn substep(&self, step: &Step<N>, tau: f64) -> Result<SVector<f64, N>> {
        if tau == 0.0 {
            return Ok(step.y_start);
        }
        let k1 = (self.f)(step.s_start, &step.y_start)?;
        Ok(rkf_step(&self.f, step.s_start, &step.y_start, &k1, tau)?.0)
    }

    /// Bisects the sign change of `g` inside `step` down to `refine_tol`.
    pub fn locate(
        &self,
        step: &Step<N>,
        g: &dyn Fn(f64, &SVector<f64, N>) -> f64,
        g_start: f64,
        refine_tol: f64,
    ) -> Result<EventHit<N>> {
        let (mut lo, mut hi) = (0.0_f64, step.h);
        let mut y_hi = self.y;
        let mut g_hi = g(self.s, &self.y);
        let mut y_lo = step.y_start;
        let mut g_lo = g_start;
        let mut guard = 0;
        while hi - lo > refine_tol && guard < 200 {
            let mid = 0.5 * (lo + hi);
            let y_mid = self.substep(step, mid)?;
            let g_mid = g(step.s_start + mid, &y_mid);
            if g_mid == 0.0 {
                return Ok(EventHit {
                    s: step.s_start + mid,
                    state: y_mid,
                });
            }
            if (g_mid > 0.0) == (g_start > 0.0) {
                lo = mid;
                y_lo = y_mid;
                g_lo = g_mid;
            } else {
                hi = mid;
                y_hi = y_mid;
                g_hi = g_mid;
            }
            guard += 1;
        }
        let (s, state) = if g_lo.abs() < g_hi.abs() && lo > 0.0 {
            (step.s_start + lo, y_lo)
        } else {
            (step.s_start + hi, y_hi)
        };
        Ok(EventHit { s, state })
    }
}

/// Integrates from `s = 0` to `s_end`, recording every accepted step.
pub fn integrate<const N: usize, F>(
    f: F,
    y0: SVector<f64, N>,
    s_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory<N>>
where
    F: Fn(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    let mut traj = Trajectory {
        s: vec![0.0],
        states: vec![y0],
        escaped: false,
    };
    if s_end <= 0.0 {
        return Ok(traj);
    }
    let mut st = Stepper::new(f, 0.0, y0, *cfg)?;
    while st.s() < s_end {
        let step = st.step(s_end)?;
        traj.s.push(st.s());
        traj.states.push(*st.state());
        if step.escaped {
            traj.escaped = true;
            break;
        }
    }
    Ok(traj)
}

/// Endpoint-only integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoint<const N: usize> {
    pub s: f64,
    pub state: SVector<f64, N>,
    pub escaped: bool,
    pub steps: usize,
}

pub fn integrate_endpoint<const N: usize, F>(
    f: F,
    y0: SVector<f64, N>,
    s_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Endpoint<N>>
where
    F: Fn(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    if s_end <= 0.0 {
        return Ok(Endpoint {
            s: 0.0,
            state: y0,
            escaped: false,
            steps: 0,
        });
    }
    let mut st = Stepper::new(f, 0.0, y0, *cfg)?;
    while st.s() < s_end {
        let step = st.step(s_end)?;
        if step.escaped {
            return Ok(Endpoint {
                s: st.s(),
                state: *st.state(),
                escaped: true,
                steps: st.steps(),
            });
        }
    }
    Ok(Endpoint {
        s: st.s(),
        state: *st.state(),
        escaped: false,
        steps: st.steps(),
    })
}

/// First `s > 0` where the event fires, up to `horizon`.
pub fn integrate_until<const N: usize, F>(
    f: F,
    y0: SVector<f64, N>,
    event: &EventSpec<'_, N>,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<EventHit<N>>
where
    F: Fn(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    if event.refine_tol <= 0.0 {
        return Err(Error::InvalidParameter(
            "refine_tol must be positive".into(),
        ));
    }
    let mut st = Stepper::new(f, 0.0, y0, *cfg)?;
    let mut g_prev = (event.g)(0.0, &y0);
    while st.s() < horizon {
        let step = st.step(horizon)?;
        let g_now = (event.g)(st.s(), st.state());
        if g_prev != 0.0 && event.direction.accepts(g_prev, g_now) {
            return st.locate(&step, event.g.as_ref(), g_prev, event.refine_tol);
        }
        if g_now == 0.0 && g_prev != 0.0 && matches_direction_at_zero(event.direction, g_prev) {
            return Ok(EventHit {
                s: st.s(),
                state: *st.state(),
            });
        }
        if step.escaped {
            break;
        }
        if g_now != 0.0 {
            g_prev = g_now;
        }
    }
    Err(Error::NoEvent { horizon })
}

fn matches_direction_at_zero(direction: Direction, before: f64) -> bool {
    match direction {
        Direction::Rising => before < 0.0,
        Direction::Falling => before > 0.0,
        Direction::Both => true,
    }
}

// ---------------------------------------------------------------------------
// Variational integration

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalResult<const N: usize> {
    pub fundamental: SMatrix<f64, N, N>,
    pub base: SVector<f64, N>,
    /// `max |Y^T J Y - Y0^T J Y0|`.
    pub symplectic_defect: f64,
    pub steps: usize,
}

macro_rules! variational_integrator {
    ($name:ident, $n:literal, $aug:literal, $rhs:path) => {
        /// Integrates base point and fundamental matrix as one augmented
        /// system sharing a single step size.
        pub fn $name(
            base0: &SVector<f64, $n>,
            seed: &SMatrix<f64, $n, $n>,
            s_end: f64,
            params: &Params,
            cfg: &IntegratorConfig,
        ) -> Result<VariationalResult<$n>> {
            if seed.determinant().abs() < 1e-300 {
                return Err(Error::InvalidParameter(
                    "seed matrix must be invertible".into(),
                ));
            }
            let pack = |b: &SVector<f64, $n>, t: &SMatrix<f64, $n, $n>| {
                let mut u = SVector::<f64, $aug>::zeros();
                u.fixed_rows_mut::<$n>(0).copy_from(b);
                u.fixed_rows_mut::<{ $n * $n }>($n)
                    .copy_from_slice(t.as_slice());
                u
            };
            let unpack = |u: &SVector<f64, $aug>| {
                let b = SVector::<f64, $n>::from_column_slice(&u.as_slice()[..$n]);
                let t = SMatrix::<f64, $n, $n>::from_column_slice(&u.as_slice()[$n..]);
                (b, t)
            };
            let rhs = |_s: f64, u: &SVector<f64, $aug>| -> Result<SVector<f64, $aug>> {
                let (base, tangent) = unpack(u);
                let d = $rhs(&VariationalState { base, tangent }, params)?;
                Ok(pack(&d.base, &d.tangent))
            };
            let mut c = *cfg;
            c.guard_dims = $n;
            let end = integrate_endpoint(rhs, pack(base0, seed), s_end, &c)?;
            if end.escaped {
                return Err(Error::Domain(
                    "variational base trajectory escaped the guard".into(),
                ));
            }
            let (base, fundamental) = unpack(&end.state);
            let j = crate::model::symplectic_j::<$n>();
            let reference = seed.transpose() * j * seed;
            let symplectic_defect = (fundamental.transpose() * j * fundamental - reference).amax();
            Ok(VariationalResult {
                fundamental,
                base,
                symplectic_defect,
                steps: end.steps,
            })
        }
    };
}

variational_integrator!(integrate_variational_4df, 8, 72, variational_rhs_4df);
variational_integrator!(integrate_variational_2df, 4, 20, variational_rhs_2df);

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    fn harmonic(_s: f64, y: &Vector2<f64>) -> Result<Vector2<f64>> {
        Ok(Vector2::new(y[1], -y[0]))
    }

    #[test]
    fn zero_length_integration_returns_initial_state() {
        let y0 = Vector2::new(1.0, 0.0);
        let t = integrate(harmonic, y0, 0.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(t.s, vec![0.0]);
        assert_eq!(t.states, vec![y0]);
    }

    #[test]
    fn harmonic_oscillator_full_period() {
        let y0 = Vector2::new(1.0, 0.0);
        let end = integrate_endpoint(
            harmonic,
            y0,
            2.0 * std::f64::consts::PI,
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert!((end.state - y0).amax() < 1e-10);
    }

    #[test]
    fn clock_event() {
        let ev = EventSpec::new(|s, _y: &Vector2<f64>| s - 1.234, Direction::Rising, 1e-13);
        let hit = integrate_until(
            harmonic,
            Vector2::new(1.0, 0.0),
            &ev,
            10.0,
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert!((hit.s - 1.234).abs() < 1e-12);
    }

    #[test]
    fn cosine_zero_event_is_localized() {
        let ev = EventSpec::new(|_s, y: &Vector2<f64>| y[0], Direction::Falling, 1e-13);
        let hit = integrate_until(
            harmonic,
            Vector2::new(1.0, 0.0),
            &ev,
            10.0,
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert!((hit.s - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
        assert!(hit.state[0].abs() < 1e-9);
    }

    #[test]
    fn missing_event_reports_horizon() {
        let ev = EventSpec::new(|_s, _y: &Vector2<f64>| 1.0, Direction::Both, 1e-12);
        let r = integrate_until(
            harmonic,
            Vector2::new(1.0, 0.0),
            &ev,
            3.0,
            &IntegratorConfig::default(),
        );
        assert!(matches!(r, Err(Error::NoEvent { .. })));
    }

    #[test]
    fn guard_terminates_growth() {
        let grow =
            |_s: f64, y: &Vector2<f64>| -> Result<Vector2<f64>> { Ok(Vector2::new(y[0], 0.0)) };
        let cfg = IntegratorConfig::default().with_tolerance(1e-9);
        let t = integrate(grow, Vector2::new(1.0, 0.0), 100.0, &cfg).unwrap();
        assert!(t.escaped);
        assert!(t.last().1[0] > 1000.0);
        assert!(t.last().0 < 8.0);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = IntegratorConfig {
            h_min: 1.0,
            h_init: 0.1,
            ..IntegratorConfig::default()
        };
        assert!(integrate(harmonic, Vector2::new(1.0, 0.0), 1.0, &cfg).is_err());
    }
}
