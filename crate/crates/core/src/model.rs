//! Phase-space types, Hamiltonians and structure matrices of the rhomboidal
//! symmetric-mass problem.
//!
//! Two formulations are supported. The two-degree-of-freedom (2DF) problem
//! pins the mass-1 pair to the x-axis and the mass-m pair to the y-axis; the
//! four-degree-of-freedom (4DF) problem lets both pairs move in the plane while
//! keeping the configuration centrally symmetric. Both are regularized with a
//! Levi-Civita type change of variables, so binary collisions at the origin are
//! regular points of the flow in the fictitious time `s`.
//!
//! Coordinate ordering is always positions first, then momenta:
//! 2DF `(Q1, Q2, P1, P2)`, 4DF `(Q1, Q2, Q3, Q4, P1, P2, P3, P4)`.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec4 = SVector<f64, 4>;
pub type Vec8 = SVector<f64, 8>;
pub type Mat2 = SMatrix<f64, 2, 2>;
pub type Mat4 = SMatrix<f64, 4, 4>;
pub type Mat8 = SMatrix<f64, 8, 8>;

pub const SQRT_8: f64 = 2.0 * std::f64::consts::SQRT_2;

/// Mass of the y-axis pair; the x-axis pair has unit mass.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct MassRatio(f64);

impl MassRatio {
    pub fn new(m: f64) -> Result<Self> {
        if m.is_finite() && m > 0.0 && m <= 1.0 {
            Ok(MassRatio(m))
        } else {
            Err(Error::InvalidParameter(format!(
                "mass ratio must lie in (0, 1], got {m}"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// Mass ratio together with the fixed energy of the extended phase space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub m: MassRatio,
    pub energy: f64,
}

impl Params {
    pub fn new(m: MassRatio, energy: f64) -> Self {
        Params { m, energy }
    }
}

/// Which colliding pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pair {
    /// The two bodies of mass 1 (x-axis pair in 2DF).
    MassOne,
    /// The two bodies of mass m (y-axis pair in 2DF).
    MassM,
}

/// Physical 2DF state: `w1 = 2 x1'`, `w2 = 2 m x2'` (dots are physical time).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phys2DFState {
    pub x1: f64,
    pub x2: f64,
    pub w1: f64,
    pub w2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Reg2DFState {
    pub q1: f64,
    pub q2: f64,
    pub p1: f64,
    pub p2: f64,
}

impl Reg2DFState {
    pub fn new(q1: f64, q2: f64, p1: f64, p2: f64) -> Self {
        Reg2DFState { q1, q2, p1, p2 }
    }

    /// Reference collision of the mass-1 pair, `(0, zeta, sqrt 8, 0)`.
    pub fn collision_start(zeta: f64) -> Self {
        Reg2DFState::new(0.0, zeta, SQRT_8, 0.0)
    }

    pub fn to_vector(self) -> Vec4 {
        Vec4::new(self.q1, self.q2, self.p1, self.p2)
    }

    pub fn from_vector(v: &Vec4) -> Self {
        Reg2DFState::new(v[0], v[1], v[2], v[3])
    }

    /// Embeds into the invariant set `A` of the 4DF problem:
    /// `(Q1, Q2, P1, P2)_2DF -> (Q1, 0, 0, Q2, P1, 0, 0, P2)_4DF`.
    pub fn embed(self) -> Reg4DFState {
        Reg4DFState {
            q: [self.q1, 0.0, 0.0, self.q2],
            p: [self.p1, 0.0, 0.0, self.p2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Reg4DFState {
    pub q: [f64; 4],
    pub p: [f64; 4],
}

impl Reg4DFState {
    pub fn to_vector(self) -> Vec8 {
        let mut v = Vec8::zeros();
        for i in 0..4 {
            v[i] = self.q[i];
            v[i + 4] = self.p[i];
        }
        v
    }

    pub fn from_vector(v: &Vec8) -> Self {
        Reg4DFState {
            q: [v[0], v[1], v[2], v[3]],
            p: [v[4], v[5], v[6], v[7]],
        }
    }

    /// Distance from the invariant set `A = {Q2 = Q3 = P2 = P3 = 0}`.
    pub fn distance_from_invariant_set(&self) -> f64 {
        self.q[1]
            .abs()
            .max(self.q[2].abs())
            .max(self.p[1].abs())
            .max(self.p[2].abs())
    }

    /// Projection onto the 2DF coordinates `(Q1, Q4, P1, P4)`.
    pub fn restrict(&self) -> Reg2DFState {
        Reg2DFState::new(self.q[0], self.q[3], self.p[0], self.p[3])
    }
}

/// Physical 4DF state: bodies at `(x1, x2)`, `(x3, x4)` and their negatives,
/// with `w1 = 2 x1'`, `w2 = 2 x2'`, `w3 = 2 m x3'`, `w4 = 2 m x4'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phys4DFState {
    pub x: [f64; 4],
    pub w: [f64; 4],
}

/// Result of mapping a regularized state back to physical variables. At a
/// binary collision the physical momenta are infinite, so the finite
/// regularized momenta are carried instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhysPoint<S> {
    Regular(S),
    Collision {
        pair: Pair,
        positions: [f64; 4],
        reg_momenta: [f64; 4],
    },
}

impl<S> PhysPoint<S> {
    pub fn regular(self) -> Option<S> {
        match self {
            PhysPoint::Regular(s) => Some(s),
            PhysPoint::Collision { .. } => None,
        }
    }
}

/// Sign choice for the (two-valued) inverse of the squaring map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Hamiltonians

const COLLAPSE_FLOOR: f64 = 1e-300;

/// Regularized 2DF Hamiltonian in extended phase space.
pub fn gamma_2df(state: &Reg2DFState, params: &Params) -> Result<f64> {
    gamma_2df_vec(&state.to_vector(), params)
}

pub(crate) fn gamma_2df_vec(z: &Vec4, params: &Params) -> Result<f64> {
    let (q1, q2, p1, p2) = (z[0], z[1], z[2], z[3]);
    let m = params.m.get();
    let (s1, s2) = (q1 * q1, q2 * q2);
    let n = s1 * s1 + s2 * s2;
    if n < COLLAPSE_FLOOR {
        return Err(Error::domain("total collapse: Q1 = Q2 = 0"));
    }
    Ok(s2 * p1 * p1 / 16.0 + s1 * p2 * p2 / (16.0 * m)
        - 0.5 * s1 * m * m
        - 0.5 * s2
        - 4.0 * m * s1 * s2 / n.sqrt()
        - s1 * s2 * params.energy)
}

/// Regularized 4DF Hamiltonian `(Q1^2+Q2^2)(Q3^2+Q4^2)(K - U - E)`.
pub fn gamma_4df(state: &Reg4DFState, params: &Params) -> Result<f64> {
    gamma_4df_vec(&state.to_vector(), params)
}

/// Squared norms and the cross polynomial entering the 4DF potential.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Invariants4 {
    pub r1: f64,
    pub r2: f64,
    pub d_minus: f64,
    pub d_plus: f64,
}

pub(crate) fn invariants_4df(z: &Vec8) -> Result<Invariants4> {
    let (q1, q2, q3, q4) = (z[0], z[1], z[2], z[3]);
    let r1 = q1 * q1 + q2 * q2;
    let r2 = q3 * q3 + q4 * q4;
    if r1 * r1 + r2 * r2 < COLLAPSE_FLOOR {
        return Err(Error::domain("total collapse: all Q vanish"));
    }
    let cross = (q1 * q1 - q2 * q2) * q3 * q4 + q1 * q2 * (q4 * q4 - q3 * q3);
    let base = r1 * r1 + r2 * r2;
    let d_minus = base - 4.0 * cross;
    let d_plus = base + 4.0 * cross;
    if d_minus <= COLLAPSE_FLOOR || d_plus <= COLLAPSE_FLOOR {
        return Err(Error::domain(
            "binary collision between a mass-1 and a mass-m body",
        ));
    }
    Ok(Invariants4 {
        r1,
        r2,
        d_minus,
        d_plus,
    })
}

pub(crate) fn gamma_4df_vec(z: &Vec8, params: &Params) -> Result<f64> {
    let inv = invariants_4df(z)?;
    let m = params.m.get();
    let (r1, r2) = (inv.r1, inv.r2);
    let kin =
        r2 * (z[4] * z[4] + z[5] * z[5]) / 16.0 + r1 * (z[6] * z[6] + z[7] * z[7]) / (16.0 * m);
    let cross_terms = 1.0 / inv.d_minus.sqrt() + 1.0 / inv.d_plus.sqrt();
    Ok(kin
        - 0.5 * r2
        - 0.5 * m * m * r1
        - 2.0 * m * r1 * r2 * cross_terms
        - params.energy * r1 * r2)
}

/// Physical 4DF Hamiltonian `H = K - U`.
pub fn hamiltonian_4df_phys(state: &Phys4DFState, m: MassRatio) -> Result<f64> {
    let m = m.get();
    let [x1, x2, x3, x4] = state.x;
    let [w1, w2, w3, w4] = state.w;
    let d11 = (x1 * x1 + x2 * x2).sqrt();
    let dmm = (x3 * x3 + x4 * x4).sqrt();
    let da = ((x3 - x1).powi(2) + (x4 - x2).powi(2)).sqrt();
    let db = ((x3 + x1).powi(2) + (x4 + x2).powi(2)).sqrt();
    if d11 == 0.0 || dmm == 0.0 || da == 0.0 || db == 0.0 {
        return Err(Error::domain("collision: physical Hamiltonian undefined"));
    }
    let kin = 0.25 * (w1 * w1 + w2 * w2) + (w3 * w3 + w4 * w4) / (4.0 * m);
    let pot = 0.5 / d11 + 0.5 * m * m / dmm + 2.0 * m / da + 2.0 * m / db;
    Ok(kin - pot)
}

/// Physical 2DF Hamiltonian.
pub fn hamiltonian_2df_phys(state: &Phys2DFState, m: MassRatio) -> Result<f64> {
    let m = m.get();
    if state.x1 <= 0.0 || state.x2 <= 0.0 {
        return Err(Error::domain("collision: physical Hamiltonian undefined"));
    }
    Ok(0.25 * state.w1 * state.w1 + state.w2 * state.w2 / (4.0 * m)
        - 0.5 / state.x1
        - 0.5 * m * m / state.x2
        - 4.0 * m / state.x1.hypot(state.x2))
}

// ---------------------------------------------------------------------------
// Coordinate transforms

pub fn reg_to_phys_2df(state: &Reg2DFState) -> PhysPoint<Phys2DFState> {
    let x1 = state.q1 * state.q1;
    let x2 = state.q2 * state.q2;
    let positions = [x1, x2, 0.0, 0.0];
    let reg_momenta = [state.p1, state.p2, 0.0, 0.0];
    if state.q1 == 0.0 {
        return PhysPoint::Collision {
            pair: Pair::MassOne,
            positions,
            reg_momenta,
        };
    }
    if state.q2 == 0.0 {
        return PhysPoint::Collision {
            pair: Pair::MassM,
            positions,
            reg_momenta,
        };
    }
    PhysPoint::Regular(Phys2DFState {
        x1,
        x2,
        w1: state.p1 / (2.0 * state.q1),
        w2: state.p2 / (2.0 * state.q2),
    })
}

pub fn phys_to_reg_2df(state: &Phys2DFState, branch: [Branch; 2]) -> Result<Reg2DFState> {
    if state.x1 < 0.0 || state.x2 < 0.0 {
        return Err(Error::domain("2DF positions must be non-negative"));
    }
    let q1 = branch[0].sign() * state.x1.sqrt();
    let q2 = branch[1].sign() * state.x2.sqrt();
    Ok(Reg2DFState::new(
        q1,
        q2,
        2.0 * q1 * state.w1,
        2.0 * q2 * state.w2,
    ))
}

pub fn reg_to_phys_4df(state: &Reg4DFState) -> PhysPoint<Phys4DFState> {
    let [q1, q2, q3, q4] = state.q;
    let [p1, p2, p3, p4] = state.p;
    let x = [
        q1 * q1 - q2 * q2,
        2.0 * q1 * q2,
        2.0 * q3 * q4,
        q4 * q4 - q3 * q3,
    ];
    let r1 = q1 * q1 + q2 * q2;
    let r2 = q3 * q3 + q4 * q4;
    if r1 == 0.0 || r2 == 0.0 {
        return PhysPoint::Collision {
            pair: if r1 == 0.0 {
                Pair::MassOne
            } else {
                Pair::MassM
            },
            positions: x,
            reg_momenta: state.p,
        };
    }
    let k1 = 1.0 / (2.0 * r1);
    let k2 = 1.0 / (2.0 * r2);
    let w = [
        k1 * (q1 * p1 - q2 * p2),
        k1 * (q2 * p1 + q1 * p2),
        k2 * (q4 * p3 + q3 * p4),
        k2 * (-q3 * p3 + q4 * p4),
    ];
    PhysPoint::Regular(Phys4DFState { x, w })
}

/// Inverse Levi-Civita map. `branch[0]` selects the sign of `Q1 + i Q2`,
/// `branch[1]` the sign of `Q4 + i Q3`.
pub fn phys_to_reg_4df(state: &Phys4DFState, branch: [Branch; 2]) -> Reg4DFState {
    let [x1, x2, x3, x4] = state.x;
    let [w1, w2, w3, w4] = state.w;
    let (q1, q2) = complex_sqrt(x1, x2);
    let (q4, q3) = complex_sqrt(x4, x3);
    let (s1, s2) = (branch[0].sign(), branch[1].sign());
    let (q1, q2, q3, q4) = (s1 * q1, s1 * q2, s2 * q3, s2 * q4);
    Reg4DFState {
        q: [q1, q2, q3, q4],
        p: [
            2.0 * w1 * q1 + 2.0 * w2 * q2,
            -2.0 * w1 * q2 + 2.0 * w2 * q1,
            2.0 * w3 * q4 - 2.0 * w4 * q3,
            2.0 * w3 * q3 + 2.0 * w4 * q4,
        ],
    }
}

/// Principal square root of `re + i im`, as `(re, im)`.
fn complex_sqrt(re: f64, im: f64) -> (f64, f64) {
    let r = re.hypot(im);
    let a = ((r + re) * 0.5).max(0.0).sqrt();
    let b = ((r - re) * 0.5).max(0.0).sqrt();
    (a, if im < 0.0 { -b } else { b })
}

/// Angular momentum in regularized variables.
pub fn angular_momentum(state: &Reg4DFState) -> f64 {
    let [q1, q2, q3, q4] = state.q;
    let [p1, p2, p3, p4] = state.p;
    0.5 * (q1 * p2 - q2 * p1 + q3 * p4 - q4 * p3)
}

pub fn angular_momentum_phys(state: &Phys4DFState) -> f64 {
    let [x1, x2, x3, x4] = state.x;
    let [w1, w2, w3, w4] = state.w;
    x1 * w2 - x2 * w1 + x3 * w4 - x4 * w3
}

/// Gradient of the regularized angular momentum.
pub fn angular_momentum_gradient(state: &Reg4DFState) -> Vec8 {
    let [q1, q2, q3, q4] = state.q;
    let [p1, p2, p3, p4] = state.p;
    0.5 * Vec8::from_column_slice(&[p2, -p1, p4, -p3, -q2, q1, -q4, q3])
}

/// Magnitude of the regularized momentum of a pair at its binary collision.
pub fn collision_momentum(pair: Pair, m: MassRatio) -> f64 {
    match pair {
        Pair::MassOne => SQRT_8,
        Pair::MassM => (8.0 * m.get().powi(3)).sqrt(),
    }
}

// ---------------------------------------------------------------------------
// Structure matrices

/// Canonical symplectic matrix `[[0, I], [-I, 0]]` of even dimension `N`.
pub fn symplectic_j<const N: usize>() -> SMatrix<f64, N, N> {
    let half = N / 2;
    SMatrix::<f64, N, N>::from_fn(|i, j| {
        if i < half && j == i + half {
            1.0
        } else if i >= half && j + half == i {
            -1.0
        } else {
            0.0
        }
    })
}

pub fn j4() -> Mat4 {
    symplectic_j::<4>()
}

pub fn j8() -> Mat8 {
    symplectic_j::<8>()
}

/// 2DF reversing symmetry, `gamma(s) = S gamma(T - s)`.
pub fn s_2df() -> Mat4 {
    Mat4::from_diagonal(&Vec4::new(-1.0, 1.0, 1.0, -1.0))
}

/// 4DF reversing symmetry built from the blocks `-G, -G, G, G`,
/// `G = diag(1, -1)`.
pub fn s_4df() -> Mat8 {
    Mat8::from_diagonal(&Vec8::from_column_slice(&[
        -1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0,
    ]))
}

/// Half-period reversor `R = -S`: `gamma(T/2 - s) = R gamma(s)`. This is the
/// symmetry that enters the quarter-period factorization; it satisfies
/// `-Y0^T R Y0 = Lambda`.
pub fn half_period_reversor() -> Mat8 {
    -s_4df()
}

/// `Lambda = diag(I, -I)`.
pub fn lambda() -> Mat8 {
    Mat8::from_diagonal(&Vec8::from_column_slice(&[
        1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0,
    ]))
}

/// Orthogonal symplectic seed for the quarter-period fundamental matrix.
pub fn y0() -> Mat8 {
    let mut y = Mat8::zeros();
    for &(r, c, v) in &[
        (0, 4, 1.0),
        (1, 2, 1.0),
        (2, 5, 1.0),
        (3, 3, 1.0),
        (4, 0, -1.0),
        (5, 6, 1.0),
        (6, 1, -1.0),
        (7, 7, 1.0),
    ] {
        y[(r, c)] = v;
    }
    y
}

/// All fixed matrices in one place.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureMatrices {
    pub j4: Mat4,
    pub j8: Mat8,
    pub s2: Mat4,
    pub s4: Mat8,
    pub reversor: Mat8,
    pub lambda: Mat8,
    pub y0: Mat8,
}

impl Default for StructureMatrices {
    fn default() -> Self {
        StructureMatrices {
            j4: j4(),
            j8: j8(),
            s2: s_2df(),
            s4: s_4df(),
            reversor: half_period_reversor(),
            lambda: lambda(),
            y0: y0(),
        }
    }
}

/// Symplectic inverse `M^-1 = -J M^T J`.
pub fn symplectic_inverse<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    let j = symplectic_j::<N>();
    -(j * m.transpose() * j)
}

/// `max |M^T J M - J|`.
pub fn symplectic_defect<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    let j = symplectic_j::<N>();
    (m.transpose() * j * m - j).amax()
}
