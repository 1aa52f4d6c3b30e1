//! Linear stability of the symmetric collision orbit.
//!
//! The quarter-period fundamental matrix `B = Y(T/4)` with `Y(0) = Y0`
//! determines the half-period matrix `W = Y0ᵀ R Y0 · B⁻¹ R B`, where `R` is
//! the half-period reversor. The lower-right 4x4 block of `W` is the reduced
//! matrix `K`; its nontrivial eigenvalues `a + d + 1` and `e` decide 4DF
//! stability, and `e` alone decides 2DF stability.

use std::io::{self, Write};

use nalgebra::{Complex, Matrix4};
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{pattern_defect_m, vf_2df, ZeroPattern};
use crate::error::{Error, Result};
use crate::integrate::{integrate_variational_2df, integrate_variational_4df, IntegratorConfig};
use crate::model::{
    half_period_reversor, j8, lambda, symplectic_inverse, y0, Mat4, Mat8, Vec8, SQRT_8,
};
use crate::orbit::OrbitSolution;

/// Defect above which [`compute_k`] rejects the structure of `K`.
pub const STRUCTURE_LIMIT: f64 = 1e-5;
/// Relative tolerance for eigenvalue coincidences.
pub const TOL_COINCIDENCE: f64 = 1e-6;
/// Half-width of the band around `|λ| = 1` reported as indeterminate.
pub const BOUNDARY_BAND: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct QuarterMatrix {
    pub b: Mat8,
    pub base_end: Vec8,
    /// `‖BᵀJB − J‖∞`.
    pub symplectic_defect: f64,
    /// Largest entry of `B` outside the `M₂` pattern.
    pub pattern_defect: f64,
}

/// Integrates the 4DF variational equations from the embedded collision
/// state with tangent `Y0` over a quarter period.
pub fn quarter_matrix(orbit: &OrbitSolution, cfg: &IntegratorConfig) -> Result<QuarterMatrix> {
    let base0 = orbit.initial_state_4df().to_vector();
    let res =
        integrate_variational_4df(&base0, &y0(), orbit.quarter_period(), &orbit.params(), cfg)?;
    Ok(QuarterMatrix {
        pattern_defect: ZeroPattern::m2().defect(&res.fundamental),
        b: res.fundamental,
        base_end: res.base,
        symplectic_defect: res.symplectic_defect,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KDefects {
    pub first_column: f64,
    pub pattern: f64,
    pub b_relation: f64,
    pub c_relation: f64,
}

impl KDefects {
    pub fn max(&self) -> f64 {
        self.first_column
            .max(self.pattern)
            .max(self.b_relation)
            .max(self.c_relation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMatrix {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub corner14: f64,
    pub full: Mat4,
    pub defects: KDefects,
}

impl KMatrix {
    /// Nontrivial eigenvalue of the central block; the other is −1.
    pub fn lambda_block(&self) -> f64 {
        self.a + self.d + 1.0
    }

    /// Eigenvalues of the full 4x4 matrix from a general eigensolver.
    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        self.full.complex_eigenvalues().iter().copied().collect()
    }

    /// Largest imaginary part among the eigenvalues, relative to their size.
    pub fn imaginary_defect(&self) -> f64 {
        let ev = self.eigenvalues();
        let scale = ev.iter().map(|z| z.norm()).fold(1.0, f64::max);
        ev.iter().map(|z| z.im.abs()).fold(0.0, f64::max) / scale
    }
}

/// `K(i, j) = −c_iᵀ R J c_{j+4}` for columns `c` of `B`.
pub fn k_from_quarter(b: &Mat8) -> Mat4 {
    let rj = half_period_reversor() * j8();
    let left = b.fixed_columns::<4>(0).into_owned();
    let right = b.fixed_columns::<4>(4).into_owned();
    -(left.transpose() * rj * right)
}

/// Extracts `K` from the quarter matrix and checks its structure.
pub fn compute_k(b: &Mat8, zeta: f64) -> Result<KMatrix> {
    if !(zeta.is_finite() && zeta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "zeta must be positive, got {zeta}"
        )));
    }
    let k = k_from_quarter(b);
    let (a, bb, c, d) = (k[(1, 1)], k[(1, 2)], k[(2, 1)], k[(2, 2)]);
    let defects = KDefects {
        first_column: (k[(0, 0)] + 1.0)
            .abs()
            .max(k[(1, 0)].abs())
            .max(k[(2, 0)].abs())
            .max(k[(3, 0)].abs()),
        pattern: pattern_defect_m(&k),
        b_relation: (bb - (a + 1.0) * zeta / SQRT_8).abs(),
        c_relation: (c - (d + 1.0) * SQRT_8 / zeta).abs(),
    };
    let checks = [
        ("K first column", defects.first_column),
        ("K zero pattern", defects.pattern),
        ("K b relation", defects.b_relation),
        ("K c relation", defects.c_relation),
    ];
    for (what, defect) in checks {
        if !(defect <= STRUCTURE_LIMIT) {
            return Err(Error::StructuralDefect {
                what,
                defect,
                limit: STRUCTURE_LIMIT,
            });
        }
    }
    Ok(KMatrix {
        a,
        b: bb,
        c,
        d,
        e: k[(3, 3)],
        corner14: k[(0, 3)],
        full: k,
        defects,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    LinearlyStable,
    SpectrallyStableOnly,
    Unstable,
    Boundary,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::LinearlyStable => "linearly-stable",
            Classification::SpectrallyStableOnly => "spectrally-stable-only",
            Classification::Unstable => "unstable",
            Classification::Boundary => "boundary",
        }
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn near(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * 1f64.max(x.abs()).max(y.abs())
}

fn on_boundary(x: f64) -> bool {
    (x.abs() - 1.0).abs() <= BOUNDARY_BAND
}

/// 4DF verdict from `λ_block` and `e`.
///
/// Inside `(−1, 1)` the coincidences `λ = e`, `λ = −e` and `λ = 0` give
/// repeated multipliers on the unit circle and only spectral stability.
pub fn classify_4df(lambda_block: f64, e: f64, tol_coincidence: f64) -> Classification {
    if on_boundary(lambda_block) || on_boundary(e) {
        return Classification::Boundary;
    }
    if lambda_block.abs() > 1.0 || e.abs() > 1.0 {
        return Classification::Unstable;
    }
    let coincident = near(lambda_block, e, tol_coincidence)
        || near(lambda_block, -e, tol_coincidence)
        || lambda_block.abs() <= tol_coincidence;
    if coincident {
        Classification::SpectrallyStableOnly
    } else {
        Classification::LinearlyStable
    }
}

/// 2DF verdict from `e`.
pub fn classify_2df(e: f64) -> Classification {
    if on_boundary(e) {
        Classification::Boundary
    } else if e.abs() < 1.0 {
        Classification::LinearlyStable
    } else {
        Classification::Unstable
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WChecks {
    /// `‖Y0ᵀY(T/2) − Y0ᵀRY0·B⁻¹RB‖∞ / max(1, ‖W‖∞)`.
    pub product_form: f64,
    /// `‖Wv + v‖∞` for `v = e5`.
    pub eigenvector: f64,
    /// Largest off-diagonal-block entry of `(W + W⁻¹)/2`.
    pub block_offdiag: f64,
    /// `‖(W + W⁻¹)/2 − diag(Kᵀ, K)‖∞` on the diagonal blocks.
    pub block_diag: f64,
    /// `max |W|`.
    pub w_norm: f64,
}

/// Half-period checks of `W` against the quarter matrix and `K`.
pub fn w_checks(
    orbit: &OrbitSolution,
    quarter: &QuarterMatrix,
    k: &KMatrix,
    cfg: &IntegratorConfig,
) -> Result<WChecks> {
    let half = integrate_variational_4df(
        &quarter.base_end,
        &quarter.b,
        orbit.quarter_period(),
        &orbit.params(),
        cfg,
    )?;
    let y = y0();
    let r = half_period_reversor();
    let w_direct = y.transpose() * half.fundamental;
    let w_product = y.transpose() * r * y * symplectic_inverse(&quarter.b) * r * quarter.b;
    let w_norm = w_direct.amax();
    let product_form = (w_direct - w_product).amax() / w_norm.max(1.0);
    let mut v = Vec8::zeros();
    v[4] = 1.0;
    let eigenvector = (w_product * v + v).amax();
    let avg = (w_product + symplectic_inverse(&w_product)) * 0.5;
    let mut block_offdiag = 0.0_f64;
    for i in 0..4 {
        for j in 0..4 {
            block_offdiag = block_offdiag
                .max(avg[(i, j + 4)].abs())
                .max(avg[(i + 4, j)].abs());
        }
    }
    let kt: Matrix4<f64> = k.full.transpose();
    let mut block_diag = 0.0_f64;
    for i in 0..4 {
        for j in 0..4 {
            block_diag = block_diag
                .max((avg[(i, j)] - kt[(i, j)]).abs())
                .max((avg[(i + 4, j + 4)] - k.full[(i, j)]).abs());
        }
    }
    Ok(WChecks {
        product_form,
        eigenvector,
        block_offdiag,
        block_diag,
        w_norm,
    })
}

/// `−Y0ᵀ R Y0 − Λ`, zero by construction.
pub fn reversor_identity_defect() -> f64 {
    let y = y0();
    (-(y.transpose() * half_period_reversor() * y) - lambda()).amax()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub m: f64,
    pub zeta: f64,
    pub energy: f64,
    pub k: KMatrix,
    pub lambda_block: f64,
    /// `{−1, −1, λ_block, e}`.
    pub eigenvalues: [f64; 4],
    pub classification: Classification,
    pub classification_2df: Classification,
    pub symplectic_defect: f64,
    /// `M` pattern defect of `K`.
    pub pattern_defect: f64,
    /// `M₂` pattern defect of the quarter matrix.
    pub quarter_pattern_defect: f64,
    /// `max(|Q2|, |P1|)` of the base point at `T/4`.
    pub quarter_collision_defect: f64,
}

pub fn stability_report(
    orbit: &OrbitSolution,
    cfg: &IntegratorConfig,
) -> Result<(StabilityReport, QuarterMatrix)> {
    let q = quarter_matrix(orbit, cfg)?;
    let k = compute_k(&q.b, orbit.zeta)?;
    let lambda_block = k.lambda_block();
    let report = StabilityReport {
        m: orbit.m.get(),
        zeta: orbit.zeta,
        energy: orbit.energy,
        lambda_block,
        eigenvalues: [-1.0, -1.0, lambda_block, k.e],
        classification: classify_4df(lambda_block, k.e, TOL_COINCIDENCE),
        classification_2df: classify_2df(k.e),
        symplectic_defect: q.symplectic_defect,
        pattern_defect: k.defects.pattern,
        quarter_pattern_defect: q.pattern_defect,
        quarter_collision_defect: q.base_end[3].abs().max(q.base_end[4].abs()),
        k,
    };
    Ok((report, q))
}

/// One sweep row: a report, or the error for that mass.
pub type SweepRow = std::result::Result<StabilityReport, (f64, Error)>;

/// Stability reports for each orbit, computed in parallel.
pub fn sweep(orbits: &[OrbitSolution], cfg: &IntegratorConfig) -> Vec<SweepRow> {
    orbits
        .par_iter()
        .map(|o| {
            stability_report(o, cfg)
                .map(|(r, _)| r)
                .map_err(|e| (o.m.get(), e))
        })
        .collect()
}

pub const CSV_HEADER: &str =
    "m,zeta,E,a,b,c,d,e,corner14,lambda_block,classification,symplectic_defect,pattern_defect";

fn f17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(rows: &[SweepRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        match row {
            Ok(r) => writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                f17(r.m),
                f17(r.zeta),
                f17(r.energy),
                f17(r.k.a),
                f17(r.k.b),
                f17(r.k.c),
                f17(r.k.d),
                f17(r.k.e),
                f17(r.k.corner14),
                f17(r.lambda_block),
                r.classification,
                f17(r.symplectic_defect),
                f17(r.pattern_defect),
            )?,
            Err((m, _)) => writeln!(out, "{},,,,,,,,,,error,,", f17(*m))?,
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    /// Smallest and largest mass classified linearly stable.
    pub stable_window: Option<(f64, f64)>,
    /// Adjacent masses bracketing a sign change of `λ_block`.
    pub lambda_zero_brackets: Vec<(f64, f64)>,
    /// Adjacent masses bracketing `λ_block = e`.
    pub lambda_e_brackets: Vec<(f64, f64)>,
    /// Adjacent masses bracketing `λ_block = −e`.
    pub lambda_minus_e_brackets: Vec<(f64, f64)>,
    /// Lowest mass whose 2DF verdict is linearly stable.
    pub lowest_2df_stable: Option<f64>,
    pub failures: usize,
}

fn brackets(reports: &[&StabilityReport], f: impl Fn(&StabilityReport) -> f64) -> Vec<(f64, f64)> {
    reports
        .windows(2)
        .filter(|w| f(w[0]) * f(w[1]) <= 0.0)
        .map(|w| (w[0].m.min(w[1].m), w[0].m.max(w[1].m)))
        .collect()
}

pub fn summarize(rows: &[SweepRow]) -> SweepSummary {
    let mut ok: Vec<&StabilityReport> = rows.iter().filter_map(|r| r.as_ref().ok()).collect();
    ok.sort_by(|a, b| a.m.total_cmp(&b.m));
    let stable: Vec<f64> = ok
        .iter()
        .filter(|r| r.classification == Classification::LinearlyStable)
        .map(|r| r.m)
        .collect();
    SweepSummary {
        stable_window: stable.first().map(|lo| (*lo, *stable.last().unwrap())),
        lambda_zero_brackets: brackets(&ok, |r| r.lambda_block),
        lambda_e_brackets: brackets(&ok, |r| r.lambda_block - r.k.e),
        lambda_minus_e_brackets: brackets(&ok, |r| r.lambda_block + r.k.e),
        lowest_2df_stable: ok
            .iter()
            .find(|r| r.classification_2df == Classification::LinearlyStable)
            .map(|r| r.m),
        failures: rows.iter().filter(|r| r.is_err()).count(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonodromyReport {
    pub eigenvalues: Vec<Complex<f64>>,
    pub determinant: f64,
    pub trace: f64,
    /// `‖X(T)f − f‖ / ‖f‖` for `f = γ′(0)`.
    pub trivial_residual: f64,
    /// `μ + 1/μ` of the nontrivial multiplier pair, `trace − 2`.
    pub pair_sum: f64,
    /// `| |μ|max − 1 |` of the nontrivial pair.
    pub unit_circle_residue: f64,
    pub classification: Classification,
    pub symplectic_defect: f64,
}

/// Full-period 2DF monodromy with identity seed.
pub fn monodromy_oracle_2df(
    orbit: &OrbitSolution,
    cfg: &IntegratorConfig,
) -> Result<MonodromyReport> {
    let z0 = orbit.initial_state().to_vector();
    let res =
        integrate_variational_2df(&z0, &Mat4::identity(), orbit.period, &orbit.params(), cfg)?;
    let x = res.fundamental;
    let f = vf_2df(&z0, &orbit.params())?;
    let trivial_residual = (x * f - f).norm() / f.norm();
    let trace = x.trace();
    let pair_sum = trace - 2.0;
    // μ + 1/μ = σ: on the unit circle iff |σ| ≤ 2
    let disc = 0.25 * pair_sum * pair_sum - 1.0;
    let mu_abs = if disc > 0.0 {
        (0.5 * pair_sum.abs() + disc.sqrt()).abs()
    } else {
        1.0
    };
    let half = 0.5 * pair_sum;
    let classification = if (half.abs() - 1.0).abs() <= 2.0 * BOUNDARY_BAND {
        Classification::Boundary
    } else if half.abs() < 1.0 {
        Classification::LinearlyStable
    } else {
        Classification::Unstable
    };
    Ok(MonodromyReport {
        eigenvalues: x.complex_eigenvalues().iter().copied().collect(),
        determinant: x.determinant(),
        trace,
        trivial_residual,
        pair_sum,
        unit_circle_residue: (mu_abs - 1.0).abs(),
        classification,
        symplectic_defect: res.symplectic_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reversor_identity_is_exact() {
        assert_eq!(reversor_identity_defect(), 0.0);
    }

    #[test]
    fn block_eigenvalue_exits_unit_interval() {
        assert_eq!(
            classify_4df(1.5, 0.3, TOL_COINCIDENCE),
            Classification::Unstable
        );
        assert_eq!(classify_2df(0.3), Classification::LinearlyStable);
    }

    #[test]
    fn coincidences_are_spectral_only() {
        assert_eq!(
            classify_4df(0.0, 0.5, TOL_COINCIDENCE),
            Classification::SpectrallyStableOnly
        );
        assert_eq!(
            classify_4df(0.4, 0.4, TOL_COINCIDENCE),
            Classification::SpectrallyStableOnly
        );
        assert_eq!(
            classify_4df(-0.4, 0.4, TOL_COINCIDENCE),
            Classification::SpectrallyStableOnly
        );
        assert_eq!(
            classify_4df(-0.4, 0.5, TOL_COINCIDENCE),
            Classification::LinearlyStable
        );
    }

    #[test]
    fn unit_band_is_indeterminate() {
        assert_eq!(
            classify_4df(1.0 - 1e-9, 0.5, TOL_COINCIDENCE),
            Classification::Boundary
        );
        assert_eq!(
            classify_4df(0.2, -1.0, TOL_COINCIDENCE),
            Classification::Boundary
        );
        assert_eq!(classify_2df(1.0 + 5e-9), Classification::Boundary);
        assert_eq!(classify_2df(-1.5), Classification::Unstable);
    }

    #[test]
    fn k_relations_hold_for_synthetic_quarter_matrix() {
        // Y0 itself gives W = Y0ᵀRY0·Y0ᵀRY0 = Λ² = I, so K = I and the first
        // column check must flag it.
        let err = compute_k(&y0(), 2.0).unwrap_err();
        assert!(matches!(
            err,
            Error::StructuralDefect {
                what: "K first column",
                ..
            }
        ));
    }

    #[test]
    fn summary_brackets_sign_changes() {
        let fake = |m: f64, lam: f64, e: f64| -> SweepRow {
            let k = KMatrix {
                a: lam - 1.0,
                b: 0.0,
                c: 0.0,
                d: 0.0,
                e,
                corner14: 0.0,
                full: Mat4::zeros(),
                defects: KDefects {
                    first_column: 0.0,
                    pattern: 0.0,
                    b_relation: 0.0,
                    c_relation: 0.0,
                },
            };
            Ok(StabilityReport {
                m,
                zeta: 1.0,
                energy: -1.0,
                lambda_block: lam,
                eigenvalues: [-1.0, -1.0, lam, e],
                classification: classify_4df(lam, e, TOL_COINCIDENCE),
                classification_2df: classify_2df(e),
                symplectic_defect: 0.0,
                pattern_defect: 0.0,
                quarter_pattern_defect: 0.0,
                quarter_collision_defect: 0.0,
                k,
            })
        };
        let rows = vec![
            fake(0.41, -3.0, 0.9),
            fake(0.40, -0.6, 0.9),
            fake(0.39, 0.5, 0.9),
            fake(0.38, 2.0, 0.9),
            Err((0.37, Error::Basin)),
        ];
        let s = summarize(&rows);
        assert_eq!(s.stable_window, Some((0.39, 0.40)));
        assert_eq!(s.lambda_zero_brackets, vec![(0.39, 0.40)]);
        assert_eq!(s.lambda_e_brackets, vec![(0.38, 0.39)]);
        assert_eq!(s.lambda_minus_e_brackets, vec![(0.40, 0.41)]);
        assert_eq!(s.failures, 1);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().last().unwrap().contains("error"));
    }
}
