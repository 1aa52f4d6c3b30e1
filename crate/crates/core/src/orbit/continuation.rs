use super::fit::{fit_orbit, FitConfig};
use super::trig::TrigModel;
use super::OrbitSolution;
use crate::error::{Error, Result};
use crate::model::MassRatio;

/// Smallest step size tried before continuation gives up.
pub const DM_MIN: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Continuation {
    /// Converged orbits at the requested grid masses, seed first.
    pub solutions: Vec<OrbitSolution>,
    /// Mass at which the step size fell below [`DM_MIN`], with the last error.
    pub failure: Option<(f64, Error)>,
}

fn snap(m: f64) -> f64 {
    (m * 1e12).round() / 1e12
}

/// Linear extrapolation of energy and coefficients to mass `m`.
fn predict(prev: Option<&OrbitSolution>, last: &OrbitSolution, m: f64) -> (f64, TrigModel) {
    match prev {
        Some(p) if p.model.n() == last.model.n() && p.m != last.m => {
            let t = (m - last.m.get()) / (last.m.get() - p.m.get());
            let xl = last.model.coefficients();
            let xp = p.model.coefficients();
            let x: Vec<f64> = xl.iter().zip(&xp).map(|(l, q)| l + t * (l - q)).collect();
            let mut model = last.model.clone();
            model.set_coefficients(&x);
            let e = last.energy + t * (last.energy - p.energy);
            (if e < 0.0 { e } else { last.energy }, model)
        }
        _ => (last.energy, last.model.clone()),
    }
}

/// Steps from `seed.m` to `m_end` on the grid `seed.m ± k dm`, halving the
/// step on failure down to [`DM_MIN`].
pub fn continue_in_mass(
    seed: OrbitSolution,
    m_end: f64,
    dm: f64,
    cfg: &FitConfig,
) -> Result<Continuation> {
    MassRatio::new(m_end)?;
    if !(dm.is_finite() && dm > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dm must be positive, got {dm}"
        )));
    }
    let m_start = seed.m.get();
    let dir = if m_end < m_start { -1.0 } else { 1.0 };
    let count = ((m_end - m_start).abs() / dm - 1e-9).ceil().max(0.0) as usize;
    let mut solutions = vec![seed];
    let mut prev: Option<OrbitSolution> = None;
    let mut failure = None;
    'grid: for k in 1..=count {
        let target = if k == count {
            m_end
        } else {
            snap(m_start + dir * dm * k as f64)
        };
        let mut h = (target - solutions.last().unwrap().m.get()).abs();
        let mut last = solutions.last().unwrap().clone();
        while (target - last.m.get()).abs() > 1e-13 {
            let step = h.min((target - last.m.get()).abs());
            let m_next = if step == (target - last.m.get()).abs() {
                target
            } else {
                last.m.get() + dir * step
            };
            let m = MassRatio::new(m_next)?;
            let (e_guess, model_guess) = predict(prev.as_ref(), &last, m_next);
            match fit_orbit(m, e_guess, &model_guess, cfg) {
                Ok(sol) => {
                    prev = Some(last);
                    last = sol;
                }
                Err(e) => {
                    h *= 0.5;
                    if h < DM_MIN {
                        failure = Some((m_next, e));
                        break 'grid;
                    }
                }
            }
        }
        solutions.push(last);
    }
    Ok(Continuation { solutions, failure })
}
