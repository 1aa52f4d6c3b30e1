//! Regularized vector fields, closed-form derivatives of the Hamiltonians and
//! the variational equations.

use nalgebra::SMatrix;

use crate::error::Result;
use crate::model::{invariants_4df, Mat4, Mat8, Params, Vec4, Vec8};

const COLLAPSE_FLOOR: f64 = 1e-300;

fn collapse_check_2df(n: f64) -> Result<()> {
    if n < COLLAPSE_FLOOR {
        Err(crate::error::Error::domain("total collapse: Q1 = Q2 = 0"))
    } else {
        Ok(())
    }
}

/// Right-hand side of the regularized 2DF equations of motion.
pub fn vf_2df(z: &Vec4, params: &Params) -> Result<Vec4> {
    let (q1, q2, p1, p2) = (z[0], z[1], z[2], z[3]);
    let m = params.m.get();
    let e = params.energy;
    let (s1, s2) = (q1 * q1, q2 * q2);
    let n = s1 * s1 + s2 * s2;
    collapse_check_2df(n)?;
    let rn = n.sqrt();
    let rn3 = n * rn;
    Ok(Vec4::new(
        s2 * p1 / 8.0,
        s1 * p2 / (8.0 * m),
        -q1 * p2 * p2 / (8.0 * m) + q1 * m * m + 8.0 * q1 * s2 * m / rn
            - 8.0 * q1 * s1 * s1 * s2 * m / rn3
            + 2.0 * q1 * s2 * e,
        -q2 * p1 * p1 / 8.0 + q2 + 8.0 * s1 * q2 * m / rn - 8.0 * s1 * q2 * s2 * s2 * m / rn3
            + 2.0 * s1 * q2 * e,
    ))
}

/// Gradient of the 2DF Hamiltonian, `(dGamma/dQ1, dGamma/dQ2, dGamma/dP1, dGamma/dP2)`.
pub fn grad_gamma_2df(z: &Vec4, params: &Params) -> Result<Vec4> {
    let f = vf_2df(z, params)?;
    // vf = J grad  =>  grad = (-P', Q')
    Ok(Vec4::new(-f[2], -f[3], f[0], f[1]))
}

/// Hessian of the 2DF Hamiltonian.
pub fn hess_gamma_2df(z: &Vec4, params: &Params) -> Result<Mat4> {
    let (q1, q2, p1, p2) = (z[0], z[1], z[2], z[3]);
    let m = params.m.get();
    let e = params.energy;
    let (s1, s2) = (q1 * q1, q2 * q2);
    let n = s1 * s1 + s2 * s2;
    collapse_check_2df(n)?;
    let n1 = 1.0 / n.sqrt();
    let n3 = n1 / n;
    let n5 = n3 / n;
    // f = Q1^2 Q2^2 / sqrt(Q1^4 + Q2^4)
    let f11 = 2.0 * s2 * n1 - 14.0 * s1 * s1 * s2 * n3 + 12.0 * s1.powi(4) * s2 * n5;
    let f22 = 2.0 * s1 * n1 - 14.0 * s1 * s2 * s2 * n3 + 12.0 * s1 * s2.powi(4) * n5;
    let f12 = 4.0 * q1 * q2 * n1 - 4.0 * q1 * q2 * (s2 * s2 + s1 * s1) * n3
        + 12.0 * q1 * s1 * s1 * q2 * s2 * s2 * n5;

    let mut h = Mat4::zeros();
    h[(0, 0)] = p2 * p2 / (8.0 * m) - m * m - 4.0 * m * f11 - 2.0 * e * s2;
    h[(1, 1)] = p1 * p1 / 8.0 - 1.0 - 4.0 * m * f22 - 2.0 * e * s1;
    h[(0, 1)] = -4.0 * m * f12 - 4.0 * e * q1 * q2;
    h[(1, 0)] = h[(0, 1)];
    h[(0, 3)] = q1 * p2 / (4.0 * m);
    h[(3, 0)] = h[(0, 3)];
    h[(1, 2)] = q2 * p1 / 4.0;
    h[(2, 1)] = h[(1, 2)];
    h[(2, 2)] = s2 / 8.0;
    h[(3, 3)] = s1 / (8.0 * m);
    Ok(h)
}

type V4 = nalgebra::Vector4<f64>;
type M4 = nalgebra::Matrix4<f64>;

/// Value, gradient and Hessian (in Q) of the position-dependent building
/// blocks of the 4DF Hamiltonian.
struct QParts {
    r1: f64,
    r2: f64,
    g_r1: V4,
    g_r2: V4,
    h_r1: M4,
    h_r2: M4,
    /// phi = D_-^{-1/2} + D_+^{-1/2}
    phi: f64,
    g_phi: V4,
    h_phi: Option<M4>,
}

fn q_parts(z: &Vec8, want_hessian: bool) -> Result<QParts> {
    let inv = invariants_4df(z)?;
    let (q1, q2, q3, q4) = (z[0], z[1], z[2], z[3]);
    let (r1, r2) = (inv.r1, inv.r2);

    let g_r1 = V4::new(2.0 * q1, 2.0 * q2, 0.0, 0.0);
    let g_r2 = V4::new(0.0, 0.0, 2.0 * q3, 2.0 * q4);
    let h_r1 = M4::from_diagonal(&V4::new(2.0, 2.0, 0.0, 0.0));
    let h_r2 = M4::from_diagonal(&V4::new(0.0, 0.0, 2.0, 2.0));

    // Cross polynomial C = (Q1^2 - Q2^2) Q3 Q4 + Q1 Q2 (Q4^2 - Q3^2).
    let d43 = q4 * q4 - q3 * q3;
    let d12 = q1 * q1 - q2 * q2;
    let g_c = V4::new(
        2.0 * q1 * q3 * q4 + q2 * d43,
        -2.0 * q2 * q3 * q4 + q1 * d43,
        d12 * q4 - 2.0 * q1 * q2 * q3,
        d12 * q3 + 2.0 * q1 * q2 * q4,
    );

    // D = R1^2 + R2^2 -/+ 4C
    let g_base = 2.0 * r1 * g_r1 + 2.0 * r2 * g_r2;
    let g_dm = g_base - 4.0 * g_c;
    let g_dp = g_base + 4.0 * g_c;

    let dm_12 = 1.0 / inv.d_minus.sqrt();
    let dp_12 = 1.0 / inv.d_plus.sqrt();
    let dm_32 = dm_12 / inv.d_minus;
    let dp_32 = dp_12 / inv.d_plus;

    let phi = dm_12 + dp_12;
    let g_phi = -0.5 * dm_32 * g_dm - 0.5 * dp_32 * g_dp;

    let h_phi = if want_hessian {
        let h_c = M4::new(
            2.0 * q3 * q4,
            d43,
            2.0 * q1 * q4 - 2.0 * q2 * q3,
            2.0 * q1 * q3 + 2.0 * q2 * q4,
            d43,
            -2.0 * q3 * q4,
            -2.0 * q2 * q4 - 2.0 * q1 * q3,
            2.0 * q1 * q4 - 2.0 * q2 * q3,
            2.0 * q1 * q4 - 2.0 * q2 * q3,
            -2.0 * q2 * q4 - 2.0 * q1 * q3,
            -2.0 * q1 * q2,
            d12,
            2.0 * q1 * q3 + 2.0 * q2 * q4,
            2.0 * q1 * q4 - 2.0 * q2 * q3,
            d12,
            2.0 * q1 * q2,
        );
        let h_base = 2.0 * (g_r1 * g_r1.transpose() + g_r2 * g_r2.transpose())
            + 2.0 * r1 * h_r1
            + 2.0 * r2 * h_r2;
        let dm_52 = dm_32 / inv.d_minus;
        let dp_52 = dp_32 / inv.d_plus;
        let part = |d52: f64, d32: f64, g: &V4, h: M4| -> M4 {
            0.75 * d52 * (g * g.transpose()) - 0.5 * d32 * h
        };
        Some(
            part(dm_52, dm_32, &g_dm, h_base - 4.0 * h_c)
                + part(dp_52, dp_32, &g_dp, h_base + 4.0 * h_c),
        )
    } else {
        None
    };

    Ok(QParts {
        r1,
        r2,
        g_r1,
        g_r2,
        h_r1,
        h_r2,
        phi,
        g_phi,
        h_phi,
    })
}

/// Closed-form gradient of the regularized 4DF Hamiltonian.
pub fn grad_gamma_4df(z: &Vec8, params: &Params) -> Result<Vec8> {
    let qp = q_parts(z, false)?;
    Ok(assemble_gradient(z, params, &qp))
}

fn assemble_gradient(z: &Vec8, params: &Params, qp: &QParts) -> Vec8 {
    let m = params.m.get();
    let e = params.energy;
    let (p1, p2, p3, p4) = (z[4], z[5], z[6], z[7]);
    let ka = (p1 * p1 + p2 * p2) / 16.0;
    let kb = (p3 * p3 + p4 * p4) / (16.0 * m);
    let pi = qp.r1 * qp.r2;
    let g_pi = qp.r2 * qp.g_r1 + qp.r1 * qp.g_r2;

    let g_q = ka * qp.g_r2 + kb * qp.g_r1
        - 0.5 * qp.g_r2
        - 0.5 * m * m * qp.g_r1
        - 2.0 * m * (qp.phi * g_pi + pi * qp.g_phi)
        - e * g_pi;

    let mut g = Vec8::zeros();
    g.fixed_rows_mut::<4>(0).copy_from(&g_q);
    g[4] = qp.r2 * p1 / 8.0;
    g[5] = qp.r2 * p2 / 8.0;
    g[6] = qp.r1 * p3 / (8.0 * m);
    g[7] = qp.r1 * p4 / (8.0 * m);
    g
}

/// 4DF vector field `J grad Gamma`.
pub fn vf_4df(z: &Vec8, params: &Params) -> Result<Vec8> {
    Ok(apply_j(&grad_gamma_4df(z, params)?))
}

#[inline]
fn apply_j(g: &Vec8) -> Vec8 {
    Vec8::from_column_slice(&[g[4], g[5], g[6], g[7], -g[0], -g[1], -g[2], -g[3]])
}

/// Closed-form Hessian of the regularized 4DF Hamiltonian.
pub fn hess_gamma_4df(z: &Vec8, params: &Params) -> Result<Mat8> {
    Ok(grad_and_hess_4df(z, params)?.1)
}

pub fn grad_and_hess_4df(z: &Vec8, params: &Params) -> Result<(Vec8, Mat8)> {
    let qp = q_parts(z, true)?;
    let grad = assemble_gradient(z, params, &qp);

    let m = params.m.get();
    let e = params.energy;
    let (p1, p2, p3, p4) = (z[4], z[5], z[6], z[7]);
    let ka = (p1 * p1 + p2 * p2) / 16.0;
    let kb = (p3 * p3 + p4 * p4) / (16.0 * m);
    let pi = qp.r1 * qp.r2;
    let g_pi = qp.r2 * qp.g_r1 + qp.r1 * qp.g_r2;
    let h_pi = qp.g_r1 * qp.g_r2.transpose()
        + qp.g_r2 * qp.g_r1.transpose()
        + qp.r2 * qp.h_r1
        + qp.r1 * qp.h_r2;
    let h_phi = qp.h_phi.expect("hessian requested");

    let h_qq = ka * qp.h_r2 + kb * qp.h_r1
        - 0.5 * qp.h_r2
        - 0.5 * m * m * qp.h_r1
        - 2.0
            * m
            * (qp.phi * h_pi
                + g_pi * qp.g_phi.transpose()
                + qp.g_phi * g_pi.transpose()
                + pi * h_phi)
        - e * h_pi;

    let mut h = Mat8::zeros();
    h.fixed_view_mut::<4, 4>(0, 0).copy_from(&h_qq);
    // mixed Q-P block
    let pv = [p1, p2, p3, p4];
    for i in 0..4 {
        for j in 0..4 {
            let v = if j < 2 {
                qp.g_r2[i] * pv[j] / 8.0
            } else {
                qp.g_r1[i] * pv[j] / (8.0 * m)
            };
            h[(i, j + 4)] = v;
            h[(j + 4, i)] = v;
        }
    }
    h[(4, 4)] = qp.r2 / 8.0;
    h[(5, 5)] = qp.r2 / 8.0;
    h[(6, 6)] = qp.r1 / (8.0 * m);
    h[(7, 7)] = qp.r1 / (8.0 * m);
    Ok((grad, h))
}

// ---------------------------------------------------------------------------
// Variational equations

/// Base point plus a fundamental-matrix tangent of matching dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState<const N: usize> {
    pub base: SMatrix<f64, N, 1>,
    pub tangent: SMatrix<f64, N, N>,
}

/// Derivative of a 4DF variational state: `base' = J grad`, `Y' = J H Y`.
pub fn variational_rhs_4df(
    v: &VariationalState<8>,
    params: &Params,
) -> Result<VariationalState<8>> {
    let (g, h) = grad_and_hess_4df(&v.base, params)?;
    let jh = j_times_8(&h);
    Ok(VariationalState {
        base: apply_j(&g),
        tangent: jh * v.tangent,
    })
}

/// 2DF counterpart of [`variational_rhs_4df`].
pub fn variational_rhs_2df(
    v: &VariationalState<4>,
    params: &Params,
) -> Result<VariationalState<4>> {
    let f = vf_2df(&v.base, params)?;
    let h = hess_gamma_2df(&v.base, params)?;
    let j = crate::model::j4();
    Ok(VariationalState {
        base: f,
        tangent: j * h * v.tangent,
    })
}

fn j_times_8(h: &Mat8) -> Mat8 {
    let mut out = Mat8::zeros();
    for i in 0..4 {
        for j in 0..8 {
            out[(i, j)] = h[(i + 4, j)];
            out[(i + 4, j)] = -h[(i, j)];
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Zero patterns

/// Boolean 8x8 mask; `true` marks entries that must vanish.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroPattern {
    pub mask: [[bool; 8]; 8],
}

/// Mixed-partial pattern of the 4DF Hessian: `0` vanishes identically, `a`
/// vanishes on the invariant set, `*` is generic.
const HESSIAN_DISPLAY: [&str; 8] = [
    "*aa*00a*", "a**a00aa", "a**aaa00", "*aa**a00", "00a**000", "00aa0*00", "aa0000*0", "*a00000*",
];

impl ZeroPattern {
    fn from_predicate(pred: impl Fn(usize, usize) -> bool) -> Self {
        let mut mask = [[false; 8]; 8];
        for (i, row) in mask.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = pred(i, j);
            }
        }
        ZeroPattern { mask }
    }

    /// Complement of the block pattern `M2`: entry `(i, j)` must vanish when
    /// `i mod 4` and `j mod 4` fall in different classes `{0, 3}` / `{1, 2}`.
    pub fn m2() -> Self {
        let class = |k: usize| matches!(k % 4, 1 | 2);
        ZeroPattern::from_predicate(|i, j| class(i) != class(j))
    }

    /// Entries of the 4DF Hessian that vanish at every state.
    pub fn hessian_identically_zero() -> Self {
        ZeroPattern::from_predicate(|i, j| HESSIAN_DISPLAY[i].as_bytes()[j] == b'0')
    }

    /// Entries of the 4DF Hessian that vanish on the invariant set.
    pub fn hessian_on_invariant_set() -> Self {
        ZeroPattern::from_predicate(|i, j| matches!(HESSIAN_DISPLAY[i].as_bytes()[j], b'0' | b'a'))
    }

    /// Largest magnitude among the entries that should vanish.
    pub fn defect(&self, m: &Mat8) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..8 {
            for j in 0..8 {
                if self.mask[i][j] {
                    worst = worst.max(m[(i, j)].abs());
                }
            }
        }
        worst
    }

    pub fn contains(&self, m: &Mat8, tol: f64) -> bool {
        self.defect(m) < tol
    }
}

/// Default absolute tolerance for pattern checks.
pub const PATTERN_TOL: f64 = 1e-10;

/// True iff `m` lies in `M2` up to `tol`.
pub fn in_pattern_m2(m: &Mat8, tol: f64) -> bool {
    ZeroPattern::m2().contains(m, tol)
}

/// Largest entry of `m` outside the `M` pattern of a 4x4 matrix.
pub fn pattern_defect_m(k: &Mat4) -> f64 {
    let class = |x: usize| matches!(x, 1 | 2);
    let mut worst = 0.0_f64;
    for i in 0..4 {
        for j in 0..4 {
            if class(i) != class(j) {
                worst = worst.max(k[(i, j)].abs());
            }
        }
    }
    worst
}
