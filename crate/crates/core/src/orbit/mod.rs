//! Periodic orbit determination for the symmetric collision orbit.
//!
//! Orbits are normalized to period `2π` so the mass-m collision happens at
//! `s = π/2`. Two independent solvers are provided: a trigonometric fit with
//! an energy secant ([`fit_orbit`]) and a quarter-period shooting method
//! ([`shooting_oracle`]). [`continue_in_mass`] steps a solution along `m`.

mod continuation;
mod fit;
mod shoot;
pub mod store;
mod trig;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use continuation::{continue_in_mass, Continuation};
pub use fit::{fit_orbit, residual, FitConfig};
pub use shoot::{bootstrap_guess, shooting_oracle, NewtonIterate, ShootConfig, ShootingResult};
pub use trig::TrigModel;

use crate::dynamics::vf_2df;
use crate::error::{Error, Result};
use crate::integrate::{integrate_endpoint, IntegratorConfig};
use crate::model::{s_2df, MassRatio, Params, Reg2DFState, Reg4DFState, Vec4};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSolution {
    pub m: MassRatio,
    /// `Q2(0)`, the collision amplitude.
    pub zeta: f64,
    pub energy: f64,
    pub model: TrigModel,
    pub period: f64,
    /// `‖γ(T) − γ(0)‖∞` from a direct integration.
    pub period_residual: f64,
    /// `Q1(T/4)`.
    pub zeta1: f64,
}

impl OrbitSolution {
    pub fn params(&self) -> Params {
        Params::new(self.m, self.energy)
    }

    pub fn initial_state(&self) -> Reg2DFState {
        Reg2DFState::collision_start(self.zeta)
    }

    pub fn initial_state_4df(&self) -> Reg4DFState {
        self.initial_state().embed()
    }

    pub fn quarter_period(&self) -> f64 {
        0.25 * self.period
    }
}

pub(crate) fn flow_2df(params: Params) -> impl Fn(f64, &Vec4) -> Result<Vec4> {
    move |_s, z| vf_2df(z, &params)
}

/// Integrates the 2DF flow from `z0` to `s_end`; escaping is an error here.
pub fn propagate(params: &Params, z0: &Vec4, s_end: f64, cfg: &IntegratorConfig) -> Result<Vec4> {
    let end = integrate_endpoint(flow_2df(*params), *z0, s_end, cfg)?;
    if end.escaped {
        return Err(Error::Domain(format!(
            "trajectory left the guard box at s = {}",
            end.s
        )));
    }
    Ok(end.state)
}

/// States at the sorted sample times `times` (all ≥ 0).
pub fn sample_trajectory(
    params: &Params,
    z0: &Vec4,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<Vec4>> {
    let mut out = Vec::with_capacity(times.len());
    let mut s = 0.0;
    let mut z = *z0;
    for &t in times {
        if t < s {
            return Err(Error::InvalidParameter(
                "sample times must be sorted".into(),
            ));
        }
        z = propagate(params, &z, t - s, cfg)?;
        s = t;
        out.push(z);
    }
    Ok(out)
}

/// Uniform samples `γ(jT/N)` for `j = 0..=N`.
pub fn sample_period(
    sol: &OrbitSolution,
    nodes: usize,
    cfg: &IntegratorConfig,
) -> Result<Vec<Vec4>> {
    let times: Vec<f64> = (0..=nodes)
        .map(|j| sol.period * j as f64 / nodes as f64)
        .collect();
    sample_trajectory(&sol.params(), &sol.initial_state().to_vector(), &times, cfg)
}

/// `(‖γ(T) − γ(0)‖∞, Q1(T/4))` by direct integration.
pub fn closure(
    params: &Params,
    zeta: f64,
    period: f64,
    cfg: &IntegratorConfig,
) -> Result<(f64, f64)> {
    let z0 = Reg2DFState::collision_start(zeta).to_vector();
    let quarter = propagate(params, &z0, 0.25 * period, cfg)?;
    let end = propagate(params, &quarter, 0.75 * period, cfg)?;
    Ok(((end - z0).amax(), quarter[0]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryResiduals {
    /// `max_s ‖γ(s) + Sγ(T/2 − s)‖∞`
    pub half: f64,
    /// `max_s ‖γ(s) − Sγ(T − s)‖∞`
    pub full: f64,
}

/// Reversing-symmetry residuals sampled on `nodes` (even) points.
pub fn symmetry_residuals(
    sol: &OrbitSolution,
    nodes: usize,
    cfg: &IntegratorConfig,
) -> Result<SymmetryResiduals> {
    if nodes < 2 || !nodes.is_multiple_of(2) {
        return Err(Error::InvalidParameter(
            "symmetry check needs an even node count".into(),
        ));
    }
    let samples = sample_period(sol, nodes, cfg)?;
    let s = s_2df();
    let (mut half, mut full) = (0.0_f64, 0.0_f64);
    for j in 0..nodes {
        let jh = (nodes / 2 + nodes - j) % nodes;
        let jf = nodes - j;
        half = half.max((samples[j] + s * samples[jh]).amax());
        full = full.max((samples[j] - s * samples[jf]).amax());
    }
    Ok(SymmetryResiduals { half, full })
}

/// The orbit `εQ(εs), P(εs)` at energy `E/ε²` with period `T/ε`.
pub fn rescale_solution(sol: &OrbitSolution, eps: f64) -> Result<OrbitSolution> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rescaling factor must be positive, got {eps}"
        )));
    }
    Ok(OrbitSolution {
        m: sol.m,
        zeta: eps * sol.zeta,
        energy: sol.energy / (eps * eps),
        model: sol.model.rescaled(eps),
        period: sol.period / eps,
        period_residual: sol.period_residual,
        zeta1: eps * sol.zeta1,
    })
}

pub(crate) const TWO_PI: f64 = 2.0 * PI;
