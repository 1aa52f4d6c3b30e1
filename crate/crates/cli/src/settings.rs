use std::fs;
use std::path::{Path, PathBuf};

use rhomb::config::{parse_config, RunConfig};
use rhomb::integrate::IntegratorConfig;
use rhomb::orbit::{FitConfig, ShootConfig};
use rhomb::MassRatio;

use crate::Failure;

pub const DEFAULT_STORE: &str = "orbits.db";
pub const DEFAULT_HARMONICS: usize = 40;

/// Config file values plus the global flags.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    pub file: RunConfig,
    pub tol: Option<f64>,
}

impl Settings {
    pub fn load(path: Option<&Path>, tol: Option<f64>) -> Result<Self, Failure> {
        let file = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
                parse_config(&text)?
            }
        };
        if let Some(t) = tol {
            if !(t.is_finite() && t > 0.0 && t <= 1e-3) {
                return Err(Failure::Usage(format!("--tol = {t} outside (0, 1e-3]")));
            }
        }
        Ok(Settings { file, tol })
    }

    pub fn integrator(&self) -> Result<IntegratorConfig, Failure> {
        let f = &self.file;
        let mut c = IntegratorConfig::default();
        c.abs_tol = self.tol.or(f.abs_tol).unwrap_or(c.abs_tol);
        c.rel_tol = self.tol.or(f.rel_tol).unwrap_or(c.rel_tol);
        c.h_min = f.h_min.unwrap_or(c.h_min);
        c.h_init = f.h_init.unwrap_or(c.h_init);
        c.h_max = f.h_max.unwrap_or(c.h_max);
        c.guard = f.guard.unwrap_or(c.guard);
        c.validate()?;
        Ok(c)
    }

    pub fn fit(&self, nodes: Option<usize>) -> Result<FitConfig, Failure> {
        let nodes = nodes
            .or(self.file.nodes)
            .unwrap_or(FitConfig::default().nodes);
        if !(8..=1 << 16).contains(&nodes) {
            return Err(Failure::Usage(format!(
                "nodes = {nodes} outside [8, 65536]"
            )));
        }
        Ok(FitConfig {
            nodes,
            integrator: self.integrator()?,
            ..FitConfig::default()
        })
    }

    pub fn shoot(&self, harmonics: Option<usize>) -> Result<ShootConfig, Failure> {
        let harmonics = self.harmonics(harmonics)?;
        Ok(ShootConfig {
            harmonics,
            integrator: self.integrator()?,
            ..ShootConfig::default()
        })
    }

    pub fn harmonics(&self, flag: Option<usize>) -> Result<usize, Failure> {
        let n = flag.or(self.file.harmonics).unwrap_or(DEFAULT_HARMONICS);
        if !(1..=512).contains(&n) {
            return Err(Failure::Usage(format!("harmonics = {n} outside [1, 512]")));
        }
        Ok(n)
    }

    pub fn mass(&self, flag: Option<f64>) -> Result<MassRatio, Failure> {
        let m = flag
            .or(self.file.m)
            .ok_or_else(|| Failure::Usage("missing --m".into()))?;
        Ok(MassRatio::new(m)?)
    }

    pub fn store(&self, flag: Option<&PathBuf>) -> PathBuf {
        flag.cloned()
            .or_else(|| self.file.orbit_store.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_STORE))
    }

    pub fn output(&self, flag: Option<&PathBuf>) -> Option<PathBuf> {
        flag.cloned().or_else(|| self.file.output.clone())
    }

    /// Caps the global rayon pool from `RHOMB_THREADS` or the config file.
    pub fn init_threads(&self) -> Result<(), Failure> {
        let env = match std::env::var("RHOMB_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n >= 1)
                    .ok_or_else(|| {
                        Failure::Usage(format!("RHOMB_THREADS = {v:?} is not a positive integer"))
                    })?,
            ),
            Err(_) => None,
        };
        if let Some(n) = env.or(self.file.threads) {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
        }
        Ok(())
    }
}
