use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rhomb::integrate::IntegratorConfig;
use rhomb::model::{gamma_2df, Params, Reg2DFState, Vec4};
use rhomb::orbit::store::OrbitStore;
use rhomb::orbit::{
    continue_in_mass, fit_orbit, residual, sample_trajectory, shooting_oracle, FitConfig,
    OrbitSolution,
};
use rhomb::poincare::{self, grid_sweep, NodeOutcome, SectionConfig};
use rhomb::stability;
use rhomb::MassRatio;

use crate::settings::Settings;
use crate::{
    Cli, Command, Failure, FindOrbitArgs, PoincareArgs, RangeArgs, SimulateArgs, SweepArgs,
};

pub fn f17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let settings = Settings::load(cli.config.as_deref(), cli.tol)?;
    settings.init_threads()?;
    match cli.command {
        Command::FindOrbit(a) => find_orbit(&settings, &a),
        Command::Continue(a) => continue_cmd(&settings, &a),
        Command::Sweep(a) => sweep(&settings, &a),
        Command::Poincare(a) => poincare_cmd(&settings, &a),
        Command::Simulate(a) => simulate(&settings, &a),
        Command::Verify(a) => crate::verify::run(&settings, &a),
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_store(path: &Path) -> Result<OrbitStore, Failure> {
    if path.exists() {
        Ok(OrbitStore::load(path)?)
    } else {
        Ok(OrbitStore::default())
    }
}

/// Shooting bootstrap followed by the trig fit.
pub fn solve_fresh(
    m: MassRatio,
    settings: &Settings,
    harmonics: Option<usize>,
    fit: &FitConfig,
) -> Result<OrbitSolution, Failure> {
    let shot = shooting_oracle(m, None, &settings.shoot(harmonics)?)?.solution;
    Ok(fit_orbit(m, shot.energy, &shot.model, fit)?)
}

/// Fit at `m` starting from a stored orbit, continuing in mass when needed.
fn solve_from_seed(
    m: MassRatio,
    seed: &OrbitSolution,
    n: usize,
    fit: &FitConfig,
) -> Result<OrbitSolution, Failure> {
    let mut seed = seed.clone();
    seed.model = seed.model.resized(n);
    if seed.m == m {
        return Ok(fit_orbit(m, seed.energy, &seed.model, fit)?);
    }
    let dm = (m.get() - seed.m.get()).abs();
    let cont = continue_in_mass(seed, m.get(), dm, fit)?;
    if let Some((at, e)) = cont.failure {
        return Err(Failure::Numerical(format!(
            "continuation from the seed stalled at m = {at}: {e}"
        )));
    }
    Ok(cont
        .solutions
        .last()
        .cloned()
        .expect("continuation keeps its seed"))
}

fn orbit_line(sol: &OrbitSolution, nodes: usize) -> Result<String, Failure> {
    let res = residual(&sol.model, &sol.params(), nodes)?;
    Ok(format!(
        "m={} zeta={} E={} period={} period_residual={} residual={}",
        f17(sol.m.get()),
        f17(sol.zeta),
        f17(sol.energy),
        f17(sol.period),
        f17(sol.period_residual),
        f17(res)
    ))
}

fn find_orbit(settings: &Settings, a: &FindOrbitArgs) -> Result<(), Failure> {
    let m = settings.mass(a.m)?;
    let fit = settings.fit(a.nodes)?;
    let n = settings.harmonics(a.harmonics)?;
    let seed = match &a.seed {
        Some(p) if !p.exists() => {
            return Err(Failure::Usage(format!(
                "seed store {} not found",
                p.display()
            )))
        }
        Some(p) => OrbitStore::load(p)?.nearest(m.get()).cloned(),
        None => None,
    };
    let sol = match &seed {
        Some(s) => solve_from_seed(m, s, n, &fit)?,
        None => solve_fresh(m, settings, Some(n), &fit)?,
    };
    let store = settings.store(a.store.as_ref());
    OrbitStore::append(&store, &sol)?;
    if let Some(s) = &seed {
        println!("seed m={}", f17(s.m.get()));
    }
    println!("{}", orbit_line(&sol, fit.nodes)?);
    Ok(())
}

struct Range {
    from: MassRatio,
    to: f64,
    dm: f64,
}

fn range(settings: &Settings, a: &RangeArgs) -> Result<Range, Failure> {
    let f = &settings.file;
    let from = a
        .m_from
        .or(f.m_from)
        .ok_or_else(|| Failure::Usage("missing --from".into()))?;
    let to = a
        .m_to
        .or(f.m_to)
        .ok_or_else(|| Failure::Usage("missing --to".into()))?;
    let dm = a.dm.or(f.dm).unwrap_or(0.01);
    let from = MassRatio::new(from)?;
    MassRatio::new(to)?;
    if from.get() == to {
        return Err(Failure::Usage(format!("empty mass range {to}..{to}")));
    }
    if !(dm.is_finite() && dm > 0.0) {
        return Err(Failure::Usage(format!("dm = {dm} must be positive")));
    }
    Ok(Range { from, to, dm })
}

/// Orbits on the continuation grid; a stalled continuation yields the
/// converged prefix and the failure message.
fn continuation(
    settings: &Settings,
    a: &RangeArgs,
    store: Option<&Path>,
) -> Result<(Vec<OrbitSolution>, Option<String>), Failure> {
    let r = range(settings, a)?;
    let fit = settings.fit(a.nodes)?;
    let n = settings.harmonics(a.harmonics)?;
    let stored = match store {
        Some(p) => load_store(p)?.latest(r.from.get()).cloned(),
        None => None,
    };
    let fresh = stored.is_none();
    let seed = match stored {
        Some(s) => solve_from_seed(r.from, &s, n, &fit)?,
        None => solve_fresh(r.from, settings, Some(n), &fit)?,
    };
    let cont = continue_in_mass(seed, r.to, r.dm, &fit)?;
    if let Some(p) = store {
        let skip = usize::from(!fresh);
        for sol in &cont.solutions[skip..] {
            OrbitStore::append(p, sol)?;
        }
    }
    let failure = cont
        .failure
        .map(|(m, e)| format!("continuation stalled at m = {m}: {e}"));
    Ok((cont.solutions, failure))
}

fn continue_cmd(settings: &Settings, a: &RangeArgs) -> Result<(), Failure> {
    let store = settings.store(a.store.as_ref());
    let nodes = settings.fit(a.nodes)?.nodes;
    let (sols, failure) = continuation(settings, a, Some(&store))?;
    for sol in &sols {
        println!("{}", orbit_line(sol, nodes)?);
    }
    match failure {
        Some(msg) => Err(Failure::Numerical(msg)),
        None => Ok(()),
    }
}

fn sweep(settings: &Settings, a: &SweepArgs) -> Result<(), Failure> {
    let store: Option<PathBuf> = a
        .range
        .store
        .clone()
        .or_else(|| settings.file.orbit_store.clone());
    let (sols, failure) = continuation(settings, &a.range, store.as_deref())?;
    let rows = stability::sweep(&sols, &settings.integrator()?);
    let output = settings.output(a.output.as_ref());
    {
        let mut out = open_output(output.as_deref())?;
        stability::write_csv(&rows, &mut out)?;
        out.flush()?;
    }
    let s = stability::summarize(&rows);
    let line = format!(
        "summary: orbits={} stable_window={} lambda_zero_brackets={} lambda_e_brackets={} lambda_minus_e_brackets={} lowest_2df_stable={} failures={}",
        rows.len(),
        s.stable_window.map_or("none".into(), |(lo, hi)| format!("[{lo},{hi}]")),
        brackets(&s.lambda_zero_brackets),
        brackets(&s.lambda_e_brackets),
        brackets(&s.lambda_minus_e_brackets),
        s.lowest_2df_stable.map_or("none".into(), |m| m.to_string()),
        s.failures
    );
    if output.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
    for row in &rows {
        if let Err((m, e)) = row {
            eprintln!("m={m}: {e}");
        }
    }
    if let Some(msg) = failure {
        return Err(Failure::Numerical(msg));
    }
    if s.failures > 0 {
        return Err(Failure::Numerical(format!(
            "{} stability reports failed",
            s.failures
        )));
    }
    Ok(())
}

fn brackets(b: &[(f64, f64)]) -> String {
    let parts: Vec<String> = b.iter().map(|(lo, hi)| format!("({lo},{hi})")).collect();
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join(";")
    }
}

fn poincare_cmd(settings: &Settings, a: &PoincareArgs) -> Result<(), Failure> {
    let m = settings.mass(a.m)?;
    if a.alpha_only {
        let alpha = poincare::solve_alpha(m)?;
        println!(
            "alpha={} r_max={}",
            f17(alpha),
            f17(poincare::r_max(m, alpha))
        );
        return Ok(());
    }
    let f = &settings.file;
    let mut cfg = SectionConfig::new(m);
    cfg.r_count = a.r_count.or(f.grid_r_count).unwrap_or(cfg.r_count);
    cfg.r_range = (
        a.r_min.or(f.grid_r_min).unwrap_or(cfg.r_range.0),
        a.r_max.or(f.grid_r_max).unwrap_or(cfg.r_range.1),
    );
    cfg.theta_count = a
        .theta_count
        .or(f.grid_theta_count)
        .unwrap_or(cfg.theta_count);
    cfg.theta_range = (
        a.theta_min
            .or(f.grid_theta_min)
            .unwrap_or(cfg.theta_range.0),
        a.theta_max
            .or(f.grid_theta_max)
            .unwrap_or(cfg.theta_range.1),
    );
    cfg.max_crossings = a
        .max_crossings
        .or(f.max_crossings)
        .unwrap_or(cfg.max_crossings);
    cfg.s_max = a.s_max.or(f.s_max).unwrap_or(cfg.s_max);
    cfg.integrator = IntegratorConfig {
        max_steps: cfg.integrator.max_steps,
        ..settings.integrator()?
    };
    cfg.guard = cfg.integrator.guard;
    cfg.validate()?;
    let nodes = grid_sweep(&cfg)?;
    let output = settings.output(a.output.as_ref());
    let rows = {
        let mut out = open_output(output.as_deref())?;
        let rows = poincare::write_csv(&nodes, &mut out)?;
        out.flush()?;
        rows
    };
    let mut lines = Vec::new();
    let (mut survived, mut integrated) = (0, 0);
    for node in &nodes {
        let tail = match &node.outcome {
            NodeOutcome::Series(s) => {
                integrated += 1;
                if s.crossings_found >= cfg.max_crossings && !s.escaped {
                    survived += 1;
                }
                format!(
                    "crossings_found={} escaped={} r_extent={}",
                    s.crossings_found,
                    s.escaped,
                    f17(s.r_extent())
                )
            }
            NodeOutcome::Skipped(why) => format!("skipped: {why}"),
            NodeOutcome::Failed(e) => {
                integrated += 1;
                format!("failed: {e}")
            }
        };
        lines.push(format!(
            "seed r={} theta={} {tail}",
            f17(node.r),
            f17(node.theta)
        ));
    }
    lines.push(format!(
        "summary: m={} seeds={} integrated={} reached_max_crossings={} rows={}",
        m.get(),
        nodes.len(),
        integrated,
        survived,
        rows
    ));
    for l in lines {
        if output.is_some() {
            println!("{l}");
        } else {
            eprintln!("{l}");
        }
    }
    Ok(())
}

fn parse_state(text: &str) -> Result<Vec4, Failure> {
    let v: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::Usage(format!("--state: {e}")))?;
    if v.len() != 4 || v.iter().any(|x| !x.is_finite()) {
        return Err(Failure::Usage(
            "--state needs four finite numbers Q1,Q2,P1,P2".into(),
        ));
    }
    Ok(Vec4::new(v[0], v[1], v[2], v[3]))
}

fn simulate(settings: &Settings, a: &SimulateArgs) -> Result<(), Failure> {
    let m = settings.mass(a.m)?;
    let cfg = settings.integrator()?;
    if a.samples == 0 {
        return Err(Failure::Usage("--samples must be positive".into()));
    }
    let (params, z0, s_end) = match &a.state {
        Some(text) => {
            let z0 = parse_state(text)?;
            let energy = a
                .energy
                .ok_or_else(|| Failure::Usage("--state needs --energy".into()))?;
            let s_end = a
                .s_end
                .ok_or_else(|| Failure::Usage("--state needs --s-end".into()))?;
            (Params::new(m, energy), z0, s_end)
        }
        None => {
            let store = settings.store(a.store.as_ref());
            let sol = match load_store(&store)?.latest(m.get()).cloned() {
                Some(s) => s,
                None => solve_fresh(m, settings, None, &settings.fit(None)?)?,
            };
            (
                sol.params(),
                sol.initial_state().to_vector(),
                a.s_end.unwrap_or(sol.period),
            )
        }
    };
    if !(s_end.is_finite() && s_end > 0.0) {
        return Err(Failure::Usage(format!(
            "--s-end = {s_end} must be positive"
        )));
    }
    let times: Vec<f64> = (0..=a.samples)
        .map(|j| s_end * j as f64 / a.samples as f64)
        .collect();
    let states = sample_trajectory(&params, &z0, &times, &cfg)?;
    let mut out = open_output(settings.output(a.output.as_ref()).as_deref())?;
    writeln!(out, "s,q1,q2,p1,p2,gamma")?;
    for (s, z) in times.iter().zip(&states) {
        let g = gamma_2df(&Reg2DFState::from_vector(z), &params).unwrap_or(f64::NAN);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            f17(*s),
            f17(z[0]),
            f17(z[1]),
            f17(z[2]),
            f17(z[3]),
            f17(g)
        )?;
    }
    out.flush()?;
    Ok(())
}
