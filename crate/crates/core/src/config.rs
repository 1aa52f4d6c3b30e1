//! Plain-text run configuration.
//!
//! ```text
//! # comment
//! format = rhomb-run/1
//! m = 0.5
//! harmonics = 40
//! ```
//!
//! The `format` line must come first. Every other key is optional, may appear
//! once, and is range-checked; unknown keys are rejected.

use std::collections::HashSet;
use std::path::PathBuf;

use crate::error::{Error, Result};

pub const FORMAT: &str = "rhomb-run/1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub m: Option<f64>,
    pub m_from: Option<f64>,
    pub m_to: Option<f64>,
    pub dm: Option<f64>,
    pub harmonics: Option<usize>,
    pub nodes: Option<usize>,
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub h_min: Option<f64>,
    pub h_init: Option<f64>,
    pub h_max: Option<f64>,
    pub guard: Option<f64>,
    pub grid_r_count: Option<usize>,
    pub grid_r_min: Option<f64>,
    pub grid_r_max: Option<f64>,
    pub grid_theta_count: Option<usize>,
    pub grid_theta_min: Option<f64>,
    pub grid_theta_max: Option<f64>,
    pub max_crossings: Option<usize>,
    pub s_max: Option<f64>,
    pub orbit_store: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
}

fn real(line: usize, key: &str, v: &str, lo: f64, hi: f64, open_lo: bool) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| Error::parse(line, format!("{key}: not a number: {v:?}")))?;
    let above = if open_lo { x > lo } else { x >= lo };
    if !(x.is_finite() && above && x <= hi) {
        let l = if open_lo { '(' } else { '[' };
        return Err(Error::parse(
            line,
            format!("{key} = {x} outside {l}{lo}, {hi}]"),
        ));
    }
    Ok(x)
}

fn count(line: usize, key: &str, v: &str, lo: usize, hi: usize) -> Result<usize> {
    let x: usize = v
        .parse()
        .map_err(|_| Error::parse(line, format!("{key}: not a non-negative integer: {v:?}")))?;
    if x < lo || x > hi {
        return Err(Error::parse(
            line,
            format!("{key} = {x} outside [{lo}, {hi}]"),
        ));
    }
    Ok(x)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen = HashSet::new();
    let mut format_seen = false;
    let half_pi = std::f64::consts::FRAC_PI_2;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| Error::parse(line, format!("expected key = value, found {body:?}")))?;
        let (k, v) = (k.trim(), v.trim());
        if !format_seen {
            if k != "format" || v != FORMAT {
                return Err(Error::parse(
                    line,
                    format!("first entry must be format = {FORMAT}"),
                ));
            }
            format_seen = true;
            continue;
        }
        if !seen.insert(k.to_string()) {
            return Err(Error::parse(line, format!("duplicate key {k:?}")));
        }
        match k {
            "m" => cfg.m = Some(real(line, k, v, 0.0, 1.0, true)?),
            "m_from" => cfg.m_from = Some(real(line, k, v, 0.0, 1.0, true)?),
            "m_to" => cfg.m_to = Some(real(line, k, v, 0.0, 1.0, true)?),
            "dm" => cfg.dm = Some(real(line, k, v, 0.0, 1.0, true)?),
            "harmonics" => cfg.harmonics = Some(count(line, k, v, 1, 512)?),
            "nodes" => cfg.nodes = Some(count(line, k, v, 8, 1 << 16)?),
            "abs_tol" => cfg.abs_tol = Some(real(line, k, v, 0.0, 1e-3, true)?),
            "rel_tol" => cfg.rel_tol = Some(real(line, k, v, 0.0, 1e-3, true)?),
            "h_min" => cfg.h_min = Some(real(line, k, v, 0.0, 1.0, true)?),
            "h_init" => cfg.h_init = Some(real(line, k, v, 0.0, 10.0, true)?),
            "h_max" => cfg.h_max = Some(real(line, k, v, 0.0, 10.0, true)?),
            "guard" => cfg.guard = Some(real(line, k, v, 0.0, 1e12, true)?),
            "grid_r_count" => cfg.grid_r_count = Some(count(line, k, v, 1, 1000)?),
            "grid_r_min" => cfg.grid_r_min = Some(real(line, k, v, 0.0, 1.0, true)?),
            "grid_r_max" => cfg.grid_r_max = Some(real(line, k, v, 0.0, 1.0, true)?),
            "grid_theta_count" => cfg.grid_theta_count = Some(count(line, k, v, 1, 1000)?),
            "grid_theta_min" => {
                cfg.grid_theta_min = Some(real(line, k, v, -half_pi, half_pi, true)?)
            }
            "grid_theta_max" => {
                cfg.grid_theta_max = Some(real(line, k, v, -half_pi, half_pi, true)?)
            }
            "max_crossings" => cfg.max_crossings = Some(count(line, k, v, 1, 1_000_000)?),
            "s_max" => cfg.s_max = Some(real(line, k, v, 0.0, 1e9, true)?),
            "orbit_store" | "output" => {
                if v.is_empty() {
                    return Err(Error::parse(line, format!("{k}: empty path")));
                }
                let p = Some(PathBuf::from(v));
                if k == "output" {
                    cfg.output = p;
                } else {
                    cfg.orbit_store = p;
                }
            }
            "threads" => cfg.threads = Some(count(line, k, v, 1, 1024)?),
            _ => return Err(Error::parse(line, format!("unknown key {k:?}"))),
        }
    }
    if !format_seen {
        return Err(Error::parse(0, format!("missing format = {FORMAT}")));
    }
    Ok(cfg)
}
