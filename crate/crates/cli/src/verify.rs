use serde::Serialize;

use rhomb::dynamics::vf_2df;
use rhomb::integrate::IntegratorConfig;
use rhomb::model::{
    gamma_2df, half_period_reversor, j4, j8, lambda, s_2df, s_4df, symplectic_defect, y0, Mat4,
    Mat8, Params, Reg2DFState, Vec4,
};
use rhomb::orbit::{
    sample_period, shooting_oracle, symmetry_residuals, OrbitSolution, ShootConfig,
};
use rhomb::stability::{monodromy_oracle_2df, stability_report};
use rhomb::MassRatio;

use crate::commands::{f17, solve_fresh};
use crate::settings::Settings;
use crate::{Failure, VerifyArgs};

#[derive(Debug, Clone, Serialize)]
pub struct Item {
    pub name: String,
    pub m: Option<f64>,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub items: Vec<Item>,
    pub pass: bool,
}

fn item(name: &str, m: Option<f64>, value: f64, limit: f64) -> Item {
    Item {
        name: name.into(),
        m,
        value,
        limit,
        pass: value.is_finite() && value <= limit,
    }
}

fn structure_items() -> Vec<Item> {
    let (s2, s4, y) = (s_2df(), s_4df(), y0());
    vec![
        item(
            "structure.s2_involution",
            None,
            (s2 * s2 - Mat4::identity()).amax(),
            1e-14,
        ),
        item(
            "structure.s4_involution",
            None,
            (s4 * s4 - Mat8::identity()).amax(),
            1e-14,
        ),
        item(
            "structure.s2_anticommutes_j",
            None,
            (s2 * j4() + j4() * s2).amax(),
            1e-14,
        ),
        item(
            "structure.s4_anticommutes_j",
            None,
            (s4 * j8() + j8() * s4).amax(),
            1e-14,
        ),
        item(
            "structure.y0_orthogonal",
            None,
            (y.transpose() * y - Mat8::identity()).amax(),
            1e-14,
        ),
        item(
            "structure.y0_symplectic",
            None,
            symplectic_defect(&y),
            1e-14,
        ),
        item(
            "structure.reversor_diagonalized",
            None,
            (-(y.transpose() * half_period_reversor() * y) - lambda()).amax(),
            1e-14,
        ),
    ]
}

/// Largest relative gap between the vector field and `J∇Γ` by central differences.
fn vector_field_defect(states: &[Vec4], params: &Params) -> Result<f64, Failure> {
    let mut worst = 0.0_f64;
    for z in states {
        let mut grad = Vec4::zeros();
        for i in 0..4 {
            let h = 1e-6 * z[i].abs().max(1.0);
            let (mut up, mut dn) = (*z, *z);
            up[i] += h;
            dn[i] -= h;
            let gu = gamma_2df(&Reg2DFState::from_vector(&up), params)?;
            let gd = gamma_2df(&Reg2DFState::from_vector(&dn), params)?;
            grad[i] = (gu - gd) / (2.0 * h);
        }
        let fd = j4() * grad;
        let vf = vf_2df(z, params)?;
        worst = worst.max((vf - fd).amax() / vf.amax().max(1.0));
    }
    Ok(worst)
}

fn orbit_items(
    m: MassRatio,
    settings: &Settings,
    break_symmetry: bool,
) -> Result<Vec<Item>, Failure> {
    let cfg: IntegratorConfig = settings.integrator()?;
    let fit = settings.fit(None)?;
    let mv = Some(m.get());
    let shot = shooting_oracle(
        m,
        None,
        &ShootConfig {
            integrator: cfg,
            ..ShootConfig::default()
        },
    )?
    .solution;
    let sol = solve_fresh(m, settings, None, &fit)?;
    let mut items = vec![
        item(
            "orbit.zeta_agreement",
            mv,
            (shot.zeta - sol.zeta).abs(),
            1e-6,
        ),
        item(
            "orbit.energy_agreement",
            mv,
            (shot.energy - sol.energy).abs(),
            1e-6,
        ),
        item("orbit.periodicity", mv, sol.period_residual, 1e-8),
    ];
    let checked: OrbitSolution = if break_symmetry {
        OrbitSolution {
            zeta: sol.zeta * (1.0 + 1e-3),
            ..sol.clone()
        }
    } else {
        sol.clone()
    };
    let sym = symmetry_residuals(&checked, 64, &cfg)?;
    items.push(item("orbit.symmetry", mv, sym.half.max(sym.full), 1e-6));

    let samples = sample_period(&sol, 64, &cfg)?;
    let params = sol.params();
    let mut drift = 0.0_f64;
    for z in &samples {
        drift = drift.max(gamma_2df(&Reg2DFState::from_vector(z), &params)?.abs());
    }
    items.push(item("flow.gamma_conservation", mv, drift, 1e-9));
    items.push(item(
        "flow.vector_field",
        mv,
        vector_field_defect(&samples[1..9], &params)?,
        1e-6,
    ));

    let (report, quarter) = stability_report(&sol, &cfg)?;
    let d = report.k.defects;
    items.push(item(
        "quarter.symplectic",
        mv,
        quarter.symplectic_defect,
        1e-8,
    ));
    items.push(item("quarter.pattern", mv, quarter.pattern_defect, 1e-8));
    items.push(item("k.first_column", mv, d.first_column, 1e-7));
    items.push(item("k.pattern", mv, d.pattern, 1e-8));
    items.push(item(
        "k.bc_relations",
        mv,
        d.b_relation.max(d.c_relation),
        1e-7,
    ));
    items.push(item(
        "k.real_spectrum",
        mv,
        report.k.imaginary_defect(),
        1e-8,
    ));
    let mono = monodromy_oracle_2df(&sol, &cfg)?;
    let e = report.k.e;
    items.push(item(
        "monodromy.pair_sum",
        mv,
        (mono.pair_sum - 2.0 * (2.0 * e * e - 1.0)).abs(),
        1e-6,
    ));
    items.push(item(
        "monodromy.verdict",
        mv,
        if mono.classification == report.classification_2df {
            0.0
        } else {
            1.0
        },
        0.0,
    ));
    Ok(items)
}

pub fn run(settings: &Settings, a: &VerifyArgs) -> Result<(), Failure> {
    if a.m.is_empty() {
        return Err(Failure::Usage("verify needs at least one --m".into()));
    }
    let masses =
        a.m.iter()
            .map(|&m| MassRatio::new(m))
            .collect::<Result<Vec<_>, _>>()?;
    let mut items = structure_items();
    for m in masses {
        match orbit_items(m, settings, a.break_symmetry) {
            Ok(v) => items.extend(v),
            Err(Failure::Numerical(msg)) => {
                eprintln!("m={}: {msg}", m.get());
                items.push(item("orbit.solve", Some(m.get()), f64::INFINITY, 0.0));
            }
            Err(e) => return Err(e),
        }
    }
    let report = Report {
        pass: items.iter().all(|i| i.pass),
        items,
    };
    if a.json {
        let text = serde_json::to_string_pretty(&report)
            .map_err(|e| Failure::Numerical(format!("json: {e}")))?;
        println!("{text}");
    } else {
        for i in &report.items {
            let m = i.m.map_or(String::new(), |m| format!(" m={m}"));
            println!(
                "{} {}{} value={} limit={}",
                if i.pass { "PASS" } else { "FAIL" },
                i.name,
                m,
                f17(i.value),
                f17(i.limit)
            );
        }
    }
    if report.pass {
        Ok(())
    } else {
        let failed = report.items.iter().filter(|i| !i.pass).count();
        Err(Failure::Numerical(format!(
            "{failed} verification item(s) failed"
        )))
    }
}
