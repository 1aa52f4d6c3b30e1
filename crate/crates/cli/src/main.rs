//! `rhomb`: find, continue and classify rhomboidal four-body orbits.

mod commands;
mod settings;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rhomb::Error;

#[derive(Parser, Debug)]
#[command(
    name = "rhomb",
    version,
    about = "Regularized rhomboidal four-body orbits"
)]
pub struct Cli {
    /// Run configuration file (`format = rhomb-run/1`); flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Integrator tolerance (absolute and relative).
    #[arg(long, global = true)]
    pub tol: Option<f64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Find the periodic orbit for one mass ratio and store it.
    FindOrbit(FindOrbitArgs),
    /// Continue the orbit family in m, storing every converged orbit.
    Continue(RangeArgs),
    /// Continuation plus stability classification; writes the stability CSV.
    Sweep(SweepArgs),
    /// Poincaré-section grid sweep at energy -1; writes the crossing CSV.
    Poincare(PoincareArgs),
    /// Raw trajectory dump of the regularized 2DF flow.
    Simulate(SimulateArgs),
    /// Cross-module invariant battery.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct FindOrbitArgs {
    #[arg(long)]
    pub m: Option<f64>,
    /// Orbit store whose nearest record seeds the fit.
    #[arg(long)]
    pub seed: Option<PathBuf>,
    /// Orbit store the result is appended to.
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub harmonics: Option<usize>,
    #[arg(long)]
    pub nodes: Option<usize>,
}

#[derive(Args, Debug)]
pub struct RangeArgs {
    #[arg(long = "from")]
    pub m_from: Option<f64>,
    #[arg(long = "to")]
    pub m_to: Option<f64>,
    #[arg(long)]
    pub dm: Option<f64>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub harmonics: Option<usize>,
    #[arg(long)]
    pub nodes: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub range: RangeArgs,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PoincareArgs {
    #[arg(long)]
    pub m: Option<f64>,
    /// Print α and r_max and exit.
    #[arg(long)]
    pub alpha_only: bool,
    #[arg(long)]
    pub r_count: Option<usize>,
    #[arg(long)]
    pub r_min: Option<f64>,
    #[arg(long)]
    pub r_max: Option<f64>,
    #[arg(long)]
    pub theta_count: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta_max: Option<f64>,
    #[arg(long)]
    pub max_crossings: Option<usize>,
    #[arg(long)]
    pub s_max: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub m: Option<f64>,
    /// Start state `Q1,Q2,P1,P2`; the periodic orbit's collision state when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub state: Option<String>,
    /// Energy for `--state`.
    #[arg(long, allow_hyphen_values = true)]
    pub energy: Option<f64>,
    /// Regularized end time; one orbit period when absent.
    #[arg(long)]
    pub s_end: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Mass ratios to check.
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 1.0])]
    pub m: Vec<f64>,
    #[arg(long)]
    pub json: bool,
    /// Perturb the orbit before the symmetry check (harness self-test).
    #[arg(long)]
    pub break_symmetry: bool,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::Parse { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(format!("i/o: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
