use nalgebra::{DMatrix, DVector};

use super::trig::{Basis, TrigModel};
use super::{closure, propagate, OrbitSolution, TWO_PI};
use crate::dynamics::vf_2df;
use crate::error::{Error, Result};
use crate::integrate::IntegratorConfig;
use crate::model::{MassRatio, Params, Reg2DFState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub nodes: usize,
    pub lm_max_iter: usize,
    pub secant_tol: f64,
    pub secant_max_iter: usize,
    /// Upper bound accepted for `‖γ(2π) − γ(0)‖∞`.
    pub closure_tol: f64,
    pub integrator: IntegratorConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            nodes: 512,
            lm_max_iter: 30,
            secant_tol: 1e-10,
            secant_max_iter: 40,
            closure_tol: 1e-8,
            integrator: IntegratorConfig::default(),
        }
    }
}

/// Trapezoid approximation of `∫ ‖f(model) − model′‖² ds` over one model
/// period on `nodes` uniform points.
pub fn residual(model: &TrigModel, params: &Params, nodes: usize) -> Result<f64> {
    model.validate()?;
    if nodes == 0 {
        return Err(Error::InvalidParameter(
            "quadrature needs at least one node".into(),
        ));
    }
    let h = model.period() / nodes as f64;
    let mut sum = 0.0;
    for j in 0..nodes {
        let s = h * j as f64;
        let z = model.eval(s).to_vector();
        let r = vf_2df(&z, params)? - model.derivative(s);
        sum += r.norm_squared();
    }
    Ok(sum * h)
}

/// Node residuals `√(2π/N) (f(z_j) − z′_j)` for a unit-frequency model.
fn residual_vector(model: &TrigModel, params: &Params, basis: &Basis) -> Result<DVector<f64>> {
    let w = (TWO_PI / basis.len() as f64).sqrt();
    let mut r = DVector::zeros(4 * basis.len());
    for j in 0..basis.len() {
        let (z, dz) = basis.eval(model, j);
        let v = (vf_2df(&z, params)? - dz) * w;
        r.fixed_rows_mut::<4>(4 * j).copy_from(&v);
    }
    Ok(r)
}

/// Forward-difference Jacobian of [`residual_vector`] with respect to the
/// flattened coefficients. A coefficient perturbation moves one state
/// component by a known basis function, so each column costs one vector-field
/// evaluation per node.
fn jacobian(model: &TrigModel, params: &Params, basis: &Basis) -> Result<DMatrix<f64>> {
    let n = model.n();
    let nodes = basis.len();
    let w = (TWO_PI / nodes as f64).sqrt();
    let mut states = Vec::with_capacity(nodes);
    let mut base = Vec::with_capacity(nodes);
    for j in 0..nodes {
        let (z, _) = basis.eval(model, j);
        base.push(vf_2df(&z, params)?);
        states.push(z);
    }
    let coeffs = model.coefficients();
    let mut jac = DMatrix::zeros(4 * nodes, 4 * n);
    for comp in 0..4 {
        for i in 0..n {
            let col = comp * n + i;
            let h = 1e-7 * coeffs[col].abs().max(1.0);
            let k = (2 * i + 1) as f64;
            let sign_i = if i % 2 == 0 { 1.0 } else { -1.0 };
            for j in 0..nodes {
                let sn = basis.row_sin(j)[i];
                let ca = basis.row_cos(j)[i];
                // value and s-derivative of the basis function for this column
                let (phi, dphi) = match comp {
                    0 | 3 => (sn, k * ca * sign_i),
                    1 => (ca, -k * sn * sign_i),
                    _ => (-ca, k * sn * sign_i),
                };
                let mut z = states[j];
                z[comp] += h * phi;
                let df = (vf_2df(&z, params)? - base[j]) / h;
                for r in 0..4 {
                    let mut v = df[r];
                    if r == comp {
                        v -= dphi;
                    }
                    jac[(4 * j + r, col)] = w * v;
                }
            }
        }
    }
    Ok(jac)
}

/// Levenberg-Marquardt on the node residuals at fixed energy. Returns the
/// final sum of squares.
pub(crate) fn minimize_residual(
    model: &mut TrigModel,
    params: &Params,
    basis: &Basis,
    max_iter: usize,
) -> Result<f64> {
    let mut x = DVector::from_vec(model.coefficients());
    let mut r = residual_vector(model, params, basis)?;
    let mut cost = r.norm_squared();
    let mut lambda: f64 = 1e-6;
    let p = x.len();
    let mut trial = model.clone();
    for _ in 0..max_iter {
        if cost < 1e-30 {
            break;
        }
        let jac = jacobian(model, params, basis)?;
        let scale: Vec<f64> = (0..p).map(|c| jac.column(c).norm().max(1e-12)).collect();
        let mut accepted = false;
        let mut converged = false;
        while lambda < 1e16 {
            let rows = jac.nrows();
            let mut aug = DMatrix::zeros(rows + p, p);
            aug.view_mut((0, 0), (rows, p)).copy_from(&jac);
            let sl = lambda.sqrt();
            for c in 0..p {
                aug[(rows + c, c)] = sl * scale[c];
            }
            let mut rhs = DVector::zeros(rows + p);
            rhs.rows_mut(0, rows).copy_from(&(-&r));
            let qr = aug.qr();
            qr.q_tr_mul(&mut rhs);
            let delta = match qr.r().solve_upper_triangular(&rhs.rows(0, p).into_owned()) {
                Some(d) => d,
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let x_try = &x + &delta;
            trial.set_coefficients(x_try.as_slice());
            let r_try = match residual_vector(&trial, params, basis) {
                Ok(v) => v,
                Err(_) => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let cost_try = r_try.norm_squared();
            if cost_try < cost {
                let gain = cost - cost_try;
                let step = delta.amax();
                x = x_try;
                r = r_try;
                cost = cost_try;
                model.set_coefficients(x.as_slice());
                lambda = (lambda * 0.1).max(1e-15);
                accepted = true;
                converged = gain <= 1e-14 * cost || step <= 1e-14 * (1.0 + x.amax());
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent at any damping: at the floor of the functional
            break;
        }
        if converged {
            break;
        }
    }
    Ok(cost)
}

struct Secant {
    energy: f64,
    defect: f64,
    model: TrigModel,
}

fn periodicity_defect(
    m: MassRatio,
    energy: f64,
    model: &mut TrigModel,
    basis: &Basis,
    cfg: &FitConfig,
) -> Result<f64> {
    let params = Params::new(m, energy);
    minimize_residual(model, &params, basis, cfg.lm_max_iter)?;
    let z0 = Reg2DFState::collision_start(model.zeta()).to_vector();
    Ok(propagate(&params, &z0, TWO_PI, &cfg.integrator)?[0])
}

/// Trig-fit orbit determination: Levenberg-Marquardt on the coefficients at
/// fixed energy, wrapped in a secant iteration on `E` that zeroes `Q1(2π)`
/// of a direct integration from the model's collision state.
pub fn fit_orbit(
    m: MassRatio,
    energy_guess: f64,
    model_guess: &TrigModel,
    cfg: &FitConfig,
) -> Result<OrbitSolution> {
    model_guess.validate()?;
    if !(energy_guess < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "energy guess must be negative, got {energy_guess}"
        )));
    }
    if (model_guess.omega - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(
            "fit_orbit works on 2π-normalized models (omega = 1)".into(),
        ));
    }
    let model = model_guess.clone();
    let basis = Basis::new(model.n(), cfg.nodes);

    let mut prev = {
        let mut mdl = model.clone();
        let d = periodicity_defect(m, energy_guess, &mut mdl, &basis, cfg)?;
        Secant {
            energy: energy_guess,
            defect: d,
            model: mdl,
        }
    };
    let e1 = energy_guess + 1e-6 * energy_guess.abs().max(1e-3);
    let mut cur = {
        let mut mdl = prev.model.clone();
        let d = periodicity_defect(m, e1, &mut mdl, &basis, cfg)?;
        Secant {
            energy: e1,
            defect: d,
            model: mdl,
        }
    };
    let mut best = (cur.energy, cur.defect.abs());
    let mut growth = 0;
    let mut converged = false;
    for _ in 0..cfg.secant_max_iter {
        if cur.defect == 0.0 {
            converged = true;
            break;
        }
        let slope = (cur.defect - prev.defect) / (cur.energy - prev.energy);
        if !slope.is_finite() || slope == 0.0 {
            break;
        }
        let mut next_e = cur.energy - cur.defect / slope;
        if next_e >= 0.0 {
            next_e = 0.5 * cur.energy;
        }
        let mut mdl = cur.model.clone();
        let d = periodicity_defect(m, next_e, &mut mdl, &basis, cfg)?;
        let step = (next_e - cur.energy).abs();
        prev = std::mem::replace(
            &mut cur,
            Secant {
                energy: next_e,
                defect: d,
                model: mdl,
            },
        );
        if d.abs() < best.1 {
            best = (next_e, d.abs());
            growth = 0;
        } else {
            growth += 1;
            if growth >= 4 {
                return Err(Error::Basin);
            }
        }
        if step < cfg.secant_tol {
            converged = true;
            break;
        }
    }
    let zeta = cur.model.zeta();
    if !converged {
        return Err(Error::NonConvergence {
            method: "energy secant",
            iterations: cfg.secant_max_iter,
            defect: cur.defect.abs(),
            best: Some((zeta, best.0)),
        });
    }
    let params = Params::new(m, cur.energy);
    let (period_residual, zeta1) = closure(&params, zeta, TWO_PI, &cfg.integrator)?;
    if !(period_residual < cfg.closure_tol) {
        return Err(Error::NonConvergence {
            method: "trig fit closure",
            iterations: cfg.secant_max_iter,
            defect: period_residual,
            best: Some((zeta, cur.energy)),
        });
    }
    Ok(OrbitSolution {
        m,
        zeta,
        energy: cur.energy,
        model: cur.model,
        period: TWO_PI,
        period_residual,
        zeta1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_has_positive_residual() {
        let params = Params::new(MassRatio::new(1.0).unwrap(), -0.4);
        let mut model = TrigModel::zeros(3);
        model.c[0] = -1.0;
        model.b[0] = 1.0;
        assert!(residual(&model, &params, 64).unwrap() > 0.0);
    }

    #[test]
    fn residual_vector_matches_scalar_residual() {
        let params = Params::new(MassRatio::new(0.7).unwrap(), -0.3);
        let mut model = TrigModel::zeros(4);
        model.set_coefficients(&[
            0.9, 0.1, 0.01, 0.001, 2.0, 0.3, 0.02, 0.001, -2.5, 0.2, 0.01, 0.0, 1.1, 0.1, 0.01, 0.0,
        ]);
        let basis = Basis::new(4, 128);
        let v = residual_vector(&model, &params, &basis).unwrap();
        let s = residual(&model, &params, 128).unwrap();
        assert!((v.norm_squared() - s).abs() < 1e-12 * s.max(1.0));
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let params = Params::new(MassRatio::new(0.6).unwrap(), -0.2);
        let mut model = TrigModel::zeros(3);
        model.set_coefficients(&[
            0.9, 0.1, 0.01, 2.0, 0.3, 0.02, -2.5, 0.2, 0.01, 1.1, 0.1, 0.01,
        ]);
        let basis = Basis::new(3, 48);
        let jac = jacobian(&model, &params, &basis).unwrap();
        let x = model.coefficients();
        for col in [0, 4, 7, 11] {
            let h = 1e-6;
            let mut plus = model.clone();
            let mut xp = x.clone();
            xp[col] += h;
            plus.set_coefficients(&xp);
            let mut minus = model.clone();
            let mut xm = x.clone();
            xm[col] -= h;
            minus.set_coefficients(&xm);
            let fd = (residual_vector(&plus, &params, &basis).unwrap()
                - residual_vector(&minus, &params, &basis).unwrap())
                / (2.0 * h);
            let err = (fd - jac.column(col)).amax();
            assert!(err < 1e-5, "column {col}: {err}");
        }
    }
}
