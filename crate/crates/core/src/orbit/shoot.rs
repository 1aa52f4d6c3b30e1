use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix2, Vector2};

use super::trig::TrigModel;
use super::{closure, flow_2df, propagate, sample_trajectory, OrbitSolution, TWO_PI};
use crate::error::{Error, Result};
use crate::integrate::{integrate_until, Direction, EventSpec, IntegratorConfig};
use crate::model::{MassRatio, Params, Reg2DFState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootConfig {
    pub max_iter: usize,
    /// Newton stops once `max(|Q2|, |P1|)` at `s = π/2` is below this.
    pub tol: f64,
    pub fd_rel_step: f64,
    /// Harmonics of the trig model projected from the converged trajectory.
    pub harmonics: usize,
    pub projection_nodes: usize,
    pub integrator: IntegratorConfig,
}

impl Default for ShootConfig {
    fn default() -> Self {
        ShootConfig {
            max_iter: 40,
            tol: 1e-12,
            fd_rel_step: 1e-7,
            harmonics: 40,
            projection_nodes: 512,
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonIterate {
    pub zeta: f64,
    pub energy: f64,
    pub defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingResult {
    pub solution: OrbitSolution,
    pub history: Vec<NewtonIterate>,
}

/// `(Q2, P1)` at `s = π/2` from the collision state `(0, ζ, √8, 0)`.
fn quarter_defect(
    m: MassRatio,
    zeta: f64,
    energy: f64,
    cfg: &IntegratorConfig,
) -> Result<Vector2<f64>> {
    let params = Params::new(m, energy);
    let z = propagate(
        &params,
        &Reg2DFState::collision_start(zeta).to_vector(),
        FRAC_PI_2,
        cfg,
    )?;
    Ok(Vector2::new(z[1], z[2]))
}

/// First falling zero of `Q2` from the collision state at energy `energy`.
fn first_q2_zero(
    m: MassRatio,
    zeta: f64,
    energy: f64,
    cfg: &IntegratorConfig,
) -> Result<(f64, f64)> {
    let params = Params::new(m, energy);
    let ev = EventSpec::new(
        |_s, z: &nalgebra::Vector4<f64>| z[1],
        Direction::Falling,
        1e-13,
    );
    let hit = integrate_until(
        flow_2df(params),
        Reg2DFState::collision_start(zeta).to_vector(),
        &ev,
        50.0,
        cfg,
    )?;
    Ok((hit.s, hit.state[2]))
}

/// Self-contained initial guess for [`shooting_oracle`].
///
/// Rescaling makes every energy level equivalent, so the search runs at
/// `E = −1`: scan `ζ` for a sign change of `P1` at the first zero of `Q2`,
/// bisect it, then rescale so that zero falls at `s = π/2`.
pub fn bootstrap_guess(m: MassRatio, cfg: &ShootConfig) -> Result<(f64, f64)> {
    let probe = |zeta: f64| first_q2_zero(m, zeta, -1.0, &cfg.integrator).ok();
    let grid: Vec<f64> = (0..=260).map(|k| 0.3 + 0.02 * k as f64).collect();
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    for &zeta in &grid {
        let Some((_, p1)) = probe(zeta) else {
            prev = None;
            continue;
        };
        if let Some((z0, p0)) = prev {
            if p0 * p1 <= 0.0 {
                bracket = Some((z0, p0, zeta));
                break;
            }
        }
        prev = Some((zeta, p1));
    }
    let (mut lo, p_lo, mut hi) = bracket.ok_or_else(|| {
        Error::RootNotFound(format!(
            "no sign change of P1 at the Q2 zero for m = {}",
            m.get()
        ))
    })?;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (_, p_mid) = probe(mid)
            .ok_or_else(|| Error::RootNotFound("bootstrap bisection left the domain".into()))?;
        if (p_mid > 0.0) == (p_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let zeta = 0.5 * (lo + hi);
    let (s0, _) = first_q2_zero(m, zeta, -1.0, &cfg.integrator)?;
    let eps = 2.0 * s0 / std::f64::consts::PI;
    Ok((eps * zeta, -1.0 / (eps * eps)))
}

/// Newton iteration on `(ζ, E)` requiring `Q2 = P1 = 0` at `s = π/2`, with a
/// forward-difference Jacobian. Without a guess the search starts from
/// [`bootstrap_guess`].
pub fn shooting_oracle(
    m: MassRatio,
    guess: Option<(f64, f64)>,
    cfg: &ShootConfig,
) -> Result<ShootingResult> {
    let (mut zeta, mut energy) = match guess {
        Some(g) => g,
        None => bootstrap_guess(m, cfg)?,
    };
    let icfg = &cfg.integrator;
    let mut f = quarter_defect(m, zeta, energy, icfg)?;
    let mut history = vec![NewtonIterate {
        zeta,
        energy,
        defect: f.amax(),
    }];
    let mut converged = f.amax() < cfg.tol;
    let mut iter = 0;
    while !converged && iter < cfg.max_iter {
        iter += 1;
        let hz = cfg.fd_rel_step * zeta.abs().max(1e-3);
        let he = cfg.fd_rel_step * energy.abs().max(1e-3);
        let fz = (quarter_defect(m, zeta + hz, energy, icfg)? - f) / hz;
        let fe = (quarter_defect(m, zeta, energy + he, icfg)? - f) / he;
        let jac = Matrix2::from_columns(&[fz, fe]);
        let step = jac.lu().solve(&(-f)).ok_or_else(|| Error::NonConvergence {
            method: "shooting newton (singular jacobian)",
            iterations: iter,
            defect: f.amax(),
            best: Some((zeta, energy)),
        })?;
        let mut t = 1.0;
        loop {
            let (zt, et) = (zeta + t * step[0], energy + t * step[1]);
            match quarter_defect(m, zt, et, icfg) {
                Ok(ft) if et < 0.0 && zt > 0.0 && ft.amax() < f.amax() => {
                    zeta = zt;
                    energy = et;
                    f = ft;
                    break;
                }
                _ if t > 1e-4 => t *= 0.5,
                // accept the full step when damping cannot reduce the defect
                _ => {
                    zeta += step[0];
                    energy += step[1];
                    f = quarter_defect(m, zeta, energy, icfg)?;
                    break;
                }
            }
        }
        history.push(NewtonIterate {
            zeta,
            energy,
            defect: f.amax(),
        });
        converged = f.amax() < cfg.tol || step.amax() < 1e-14 * (1.0 + zeta.abs());
    }
    if !converged {
        let best = history
            .iter()
            .min_by(|a, b| a.defect.total_cmp(&b.defect))
            .map(|h| (h.zeta, h.energy));
        return Err(Error::NonConvergence {
            method: "shooting newton",
            iterations: iter,
            defect: f.amax(),
            best,
        });
    }
    let params = Params::new(m, energy);
    let (period_residual, zeta1) = closure(&params, zeta, TWO_PI, icfg)?;
    let nodes = cfg.projection_nodes;
    let times: Vec<f64> = (0..nodes)
        .map(|j| TWO_PI * j as f64 / nodes as f64)
        .collect();
    let samples = sample_trajectory(
        &params,
        &Reg2DFState::collision_start(zeta).to_vector(),
        &times,
        icfg,
    )?;
    let model = TrigModel::project(&samples, cfg.harmonics, 1.0)?;
    Ok(ShootingResult {
        solution: OrbitSolution {
            m,
            zeta,
            energy,
            model,
            period: TWO_PI,
            period_residual,
            zeta1,
        },
        history,
    })
}
