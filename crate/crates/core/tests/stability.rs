use std::sync::OnceLock;

use rhomb::integrate::IntegratorConfig;
use rhomb::model::j8;
use rhomb::orbit::{
    fit_orbit, rescale_solution, shooting_oracle, FitConfig, OrbitSolution, ShootConfig,
};
use rhomb::stability::{
    compute_k, monodromy_oracle_2df, quarter_matrix, stability_report, w_checks, Classification,
};
use rhomb::MassRatio;

fn orbit(m: f64) -> OrbitSolution {
    let shot = shooting_oracle(MassRatio::new(m).unwrap(), None, &ShootConfig::default())
        .unwrap()
        .solution;
    fit_orbit(shot.m, shot.energy, &shot.model, &FitConfig::default()).unwrap()
}

fn orbit_m1() -> &'static OrbitSolution {
    static CELL: OnceLock<OrbitSolution> = OnceLock::new();
    CELL.get_or_init(|| orbit(1.0))
}

#[test]
fn quarter_matrix_is_symplectic_and_patterned() {
    let q = quarter_matrix(orbit_m1(), &IntegratorConfig::default()).unwrap();
    assert!((q.b.transpose() * j8() * q.b - j8()).amax() < 1e-8);
    assert!(q.pattern_defect < 1e-8, "{}", q.pattern_defect);
    assert!(q.base_end[3].abs() < 1e-8 && q.base_end[4].abs() < 1e-8);
}

#[test]
fn k_structure_at_equal_masses() {
    let cfg = IntegratorConfig::default();
    let (report, q) = stability_report(orbit_m1(), &cfg).unwrap();
    let k = &report.k;
    println!("K = {}", k.full);
    println!("lambda_block = {} e = {}", report.lambda_block, k.e);
    assert!(k.defects.first_column < 1e-7);
    assert!(k.defects.pattern < 1e-8);
    assert!(k.defects.b_relation < 1e-7 && k.defects.c_relation < 1e-7);
    assert!(k.imaginary_defect() < 1e-8);
    // central block carries the angular-momentum eigenvalue −1
    let central = nalgebra::Matrix2::new(k.a, k.b, k.c, k.d);
    assert!(
        (central + nalgebra::Matrix2::identity())
            .determinant()
            .abs()
            < 1e-7 * (1.0 + k.a.abs())
    );
    assert_eq!(report.classification_2df, Classification::LinearlyStable);
    assert_eq!(report.classification, Classification::Unstable);
    let w = w_checks(orbit_m1(), &q, k, &cfg).unwrap();
    println!("{w:?}");
    assert!(w.product_form < 1e-7);
    assert!(w.eigenvector < 1e-7);
    assert!(w.block_offdiag < 1e-6 && w.block_diag < 1e-6);
}

#[test]
fn monodromy_agrees_with_k_entry() {
    let cfg = IntegratorConfig::default();
    let (report, _) = stability_report(orbit_m1(), &cfg).unwrap();
    let mono = monodromy_oracle_2df(orbit_m1(), &cfg).unwrap();
    println!("{mono:?}");
    assert!((mono.determinant - 1.0).abs() < 1e-7);
    assert!(mono.trivial_residual < 1e-6);
    assert_eq!(mono.classification, report.classification_2df);
    let e = report.k.e;
    assert!((mono.pair_sum - 2.0 * (2.0 * e * e - 1.0)).abs() < 1e-6);
}

#[test]
fn k_eigenvalues_survive_rescaling() {
    let cfg = IntegratorConfig::default();
    let (a, _) = stability_report(orbit_m1(), &cfg).unwrap();
    let scaled = rescale_solution(orbit_m1(), 2.0).unwrap();
    let (b, _) = stability_report(&scaled, &cfg).unwrap();
    assert!((a.lambda_block - b.lambda_block).abs() < 1e-7 * a.lambda_block.abs().max(1.0));
    assert!((a.k.e - b.k.e).abs() < 1e-7);
}

#[test]
fn compute_k_rejects_nonpositive_zeta() {
    let q = quarter_matrix(orbit_m1(), &IntegratorConfig::default()).unwrap();
    assert!(compute_k(&q.b, 0.0).is_err());
    assert!(compute_k(&q.b, orbit_m1().zeta).is_ok());
}
