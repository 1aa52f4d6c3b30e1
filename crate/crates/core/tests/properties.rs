use nalgebra::{SVector, Vector4};
use proptest::prelude::*;

use rhomb::config::{parse_config, RunConfig};
use rhomb::dynamics::{vf_2df, vf_4df, ZeroPattern};
use rhomb::model::{
    angular_momentum, angular_momentum_phys, gamma_2df, gamma_4df, j4, j8, phys_to_reg_2df,
    reg_to_phys_2df, reg_to_phys_4df, s_4df, Branch, Mat8, Params, Reg2DFState, Reg4DFState, Vec4,
    Vec8,
};
use rhomb::orbit::store::{format_record, parse_store, HEADER};
use rhomb::orbit::{OrbitSolution, TrigModel};
use rhomb::poincare::{solve_alpha, Section};
use rhomb::MassRatio;

fn params(m: f64, e: f64) -> Params {
    Params::new(MassRatio::new(m).unwrap(), e)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn state8() -> impl Strategy<Value = Vec8> {
    prop::array::uniform8(-2.0f64..2.0)
        .prop_map(|a| Vec8::from_column_slice(&a))
        .prop_filter("away from binary collisions", |z| {
            z[0] * z[0] + z[1] * z[1] > 0.05 && z[2] * z[2] + z[3] * z[3] > 0.05
        })
}

fn state4() -> impl Strategy<Value = Vec4> {
    prop::array::uniform4(-2.0f64..2.0)
        .prop_map(|a| Vec4::from_column_slice(&a))
        .prop_filter("away from total collapse", |z| {
            z[0].abs() + z[1].abs() > 0.1
        })
}

fn mass() -> impl Strategy<Value = f64> {
    0.01f64..=1.0
}

/// Central-difference gradient of `f`.
fn fd_gradient<const N: usize>(
    z: &SVector<f64, N>,
    f: impl Fn(&SVector<f64, N>) -> f64,
) -> SVector<f64, N> {
    let mut g = SVector::<f64, N>::zeros();
    for i in 0..N {
        let h = 1e-5 * z[i].abs().max(1.0);
        let (mut up, mut dn) = (*z, *z);
        up[i] += h;
        dn[i] -= h;
        g[i] = (f(&up) - f(&dn)) / (2.0 * h);
    }
    g
}

fn m2_matrix() -> impl Strategy<Value = Mat8> {
    prop::collection::vec(-3.0f64..3.0, 64).prop_map(|v| {
        let mut m = Mat8::from_column_slice(&v);
        let class = |k: usize| matches!(k % 4, 1 | 2);
        for i in 0..8 {
            for j in 0..8 {
                if class(i) != class(j) {
                    m[(i, j)] = 0.0;
                }
            }
        }
        m
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn gamma4_is_invariant_under_the_symmetry(z in state8(), m in mass(), e in -3.0f64..0.0) {
        let p = params(m, e);
        let g = gamma_4df(&Reg4DFState::from_vector(&z), &p).unwrap();
        for s in [s_4df(), -s_4df()] {
            let gs = gamma_4df(&Reg4DFState::from_vector(&(s * z)), &p).unwrap();
            prop_assert!(close(g, gs, 1e-12), "{g} vs {gs}");
        }
    }

    #[test]
    fn gamma4_on_the_invariant_set_is_gamma2(z in state4(), m in mass(), e in -3.0f64..0.0) {
        let p = params(m, e);
        let s2 = Reg2DFState::from_vector(&z);
        let g2 = gamma_2df(&s2, &p).unwrap();
        let g4 = gamma_4df(&s2.embed(), &p).unwrap();
        prop_assert!(close(g2, g4, 1e-12), "{g2} vs {g4}");
        let v4 = vf_4df(&s2.embed().to_vector(), &p).unwrap();
        let v2 = vf_2df(&z, &p).unwrap();
        let restricted = Vector4::new(v4[0], v4[3], v4[4], v4[7]);
        prop_assert!((restricted - v2).amax() <= 1e-12 * v2.amax().max(1.0));
        prop_assert!(v4[1] == 0.0 && v4[2] == 0.0 && v4[5] == 0.0 && v4[6] == 0.0);
    }

    #[test]
    fn angular_momentum_formulas_agree(z in state8()) {
        let reg = Reg4DFState::from_vector(&z);
        let phys = reg_to_phys_4df(&reg).regular().unwrap();
        let a = angular_momentum(&reg);
        let b = angular_momentum_phys(&phys);
        prop_assert!(close(a, b, 1e-10), "{a} vs {b}");
    }

    #[test]
    fn m2_pattern_is_closed_under_products(a in m2_matrix(), b in m2_matrix()) {
        prop_assert_eq!(ZeroPattern::m2().defect(&(a * b)), 0.0);
    }

    #[test]
    fn vector_field_2df_is_j_grad_gamma(z in state4(), m in mass(), e in -3.0f64..0.0) {
        let p = params(m, e);
        let grad = fd_gradient(&z, |y| gamma_2df(&Reg2DFState::from_vector(y), &p).unwrap());
        let vf = vf_2df(&z, &p).unwrap();
        prop_assert!((vf - j4() * grad).amax() <= 1e-6 * vf.amax().max(1.0));
    }

    #[test]
    fn vector_field_4df_is_j_grad_gamma(z in state8(), m in mass(), e in -3.0f64..0.0) {
        let p = params(m, e);
        let grad = fd_gradient(&z, |y| gamma_4df(&Reg4DFState::from_vector(y), &p).unwrap());
        let vf = vf_4df(&z, &p).unwrap();
        prop_assert!((vf - j8() * grad).amax() <= 1e-6 * vf.amax().max(1.0));
    }

    #[test]
    fn physical_2df_round_trip(z in state4()) {
        prop_assume!(z[0].abs() > 1e-3 && z[1].abs() > 1e-3);
        let s = Reg2DFState::from_vector(&z);
        let phys = reg_to_phys_2df(&s).regular().unwrap();
        let branch = [z[0], z[1]].map(|q| if q < 0.0 { Branch::Minus } else { Branch::Plus });
        let back = phys_to_reg_2df(&phys, branch).unwrap().to_vector();
        prop_assert!((back - z).amax() < 1e-12 * z.amax().max(1.0));
    }

    #[test]
    fn section_lift_round_trip(m in mass(), r in 0.01f64..0.99, theta in -1.55f64..1.55) {
        let sec = Section::new(MassRatio::new(m).unwrap()).unwrap();
        let z = sec.lift(r, theta).unwrap();
        let (r2, t2) = sec.coords(&z).unwrap();
        prop_assert!((r - r2).abs() < 1e-10 && (theta - t2).abs() < 1e-10);
        prop_assert!(sec.g(&z.to_vector()).abs() < 1e-12);
        prop_assert!(sec.energy_error(&z.to_vector()).unwrap() < 1e-10);
    }

    #[test]
    fn alpha_branch_is_continuous(m in 0.001f64..0.999) {
        let a = solve_alpha(MassRatio::new(m).unwrap()).unwrap();
        let b = solve_alpha(MassRatio::new(m + 1e-6).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-4);
        prop_assert!(a > 1.0 / 3f64.sqrt() - 1e-12 && a <= 1.0);
    }

    #[test]
    fn store_records_round_trip(
        m in mass(),
        scalars in prop::array::uniform5(-1e3f64..1e3),
        coeffs in prop::collection::vec(-10.0f64..10.0, 4..=40),
    ) {
        let n = coeffs.len() / 4;
        let mut model = TrigModel::zeros(n);
        model.set_coefficients(&coeffs[..4 * n]);
        let sol = OrbitSolution {
            m: MassRatio::new(m).unwrap(),
            zeta: scalars[0],
            energy: scalars[1],
            model,
            period: scalars[2].abs() + 1.0,
            period_residual: scalars[3].abs(),
            zeta1: scalars[4],
        };
        let text = format!("{HEADER}\n{}\n", format_record(&sol));
        let back = parse_store(&text).unwrap();
        prop_assert_eq!(back, vec![sol]);
    }

    #[test]
    fn config_values_round_trip(
        m in mass(),
        harmonics in 1usize..=512,
        nodes in 8usize..=65536,
        tol in 1e-15f64..1e-3,
        theta in -1.5f64..1.5,
    ) {
        let text = format!(
            "format = rhomb-run/1\nm = {m:e}\nharmonics = {harmonics}\nnodes = {nodes}\nabs_tol = {tol:e}\ngrid_theta_min = {theta:e}\n"
        );
        let cfg = parse_config(&text).unwrap();
        prop_assert_eq!(cfg, RunConfig {
            m: Some(m),
            harmonics: Some(harmonics),
            nodes: Some(nodes),
            abs_tol: Some(tol),
            grid_theta_min: Some(theta),
            ..RunConfig::default()
        });
    }

    #[test]
    fn parsers_never_panic(text in "\\PC{0,200}") {
        let _ = parse_store(&text);
        let _ = parse_config(&text);
        let _ = parse_store(&format!("{HEADER}\n{text}"));
        let _ = parse_config(&format!("format = rhomb-run/1\n{text}"));
    }
}
