//! Plain-text orbit store.
//!
//! ```text
//! format=rhomb-orbit-store/1
//! m=1.0000000000000000e0 zeta=... energy=... period=... period_residual=... zeta1=... n=40 omega=... a=v,v,... b=... c=... d=...
//! ```
//!
//! The first non-blank, non-comment line is the format header. Each following
//! line is one record of whitespace-separated `key=value` fields; `#` starts a
//! comment line. The file is append-only and the newest record for a mass
//! wins.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use super::trig::TrigModel;
use super::OrbitSolution;
use crate::error::{Error, Result};
use crate::model::MassRatio;

pub const HEADER: &str = "format=rhomb-orbit-store/1";
const MAX_HARMONICS: usize = 4096;
const KEYS: [&str; 12] = [
    "m",
    "zeta",
    "energy",
    "period",
    "period_residual",
    "zeta1",
    "n",
    "omega",
    "a",
    "b",
    "c",
    "d",
];

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",")
}

pub fn format_record(sol: &OrbitSolution) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "m={} zeta={} energy={} period={} period_residual={} zeta1={} n={} omega={} a={} b={} c={} d={}",
        fmt_f64(sol.m.get()),
        fmt_f64(sol.zeta),
        fmt_f64(sol.energy),
        fmt_f64(sol.period),
        fmt_f64(sol.period_residual),
        fmt_f64(sol.zeta1),
        sol.model.n(),
        fmt_f64(sol.model.omega),
        fmt_list(&sol.model.a),
        fmt_list(&sol.model.b),
        fmt_list(&sol.model.c),
        fmt_list(&sol.model.d),
    );
    s
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| Error::parse(line, format!("{key}: not a number: {v:?}")))?;
    if !x.is_finite() {
        return Err(Error::parse(line, format!("{key}: non-finite value")));
    }
    Ok(x)
}

fn parse_list(line: usize, key: &str, v: &str, n: usize) -> Result<Vec<f64>> {
    let out = v
        .split(',')
        .map(|t| parse_f64(line, key, t))
        .collect::<Result<Vec<_>>>()?;
    if out.len() != n {
        return Err(Error::parse(
            line,
            format!("{key}: expected {n} coefficients, found {}", out.len()),
        ));
    }
    Ok(out)
}

pub fn parse_record(text: &str, line: usize) -> Result<OrbitSolution> {
    let mut fields: HashMap<&str, &str> = HashMap::new();
    for tok in text.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::parse(line, format!("expected key=value, found {tok:?}")))?;
        if !KEYS.contains(&k) {
            return Err(Error::parse(line, format!("unknown key {k:?}")));
        }
        if fields.insert(k, v).is_some() {
            return Err(Error::parse(line, format!("duplicate key {k:?}")));
        }
    }
    for k in KEYS {
        if !fields.contains_key(k) {
            return Err(Error::parse(line, format!("missing key {k:?}")));
        }
    }
    let num = |k: &str| parse_f64(line, k, fields[k]);
    let m = MassRatio::new(num("m")?).map_err(|e| Error::parse(line, e.to_string()))?;
    let n: usize = fields["n"]
        .parse()
        .map_err(|_| Error::parse(line, "n: not a non-negative integer"))?;
    if n == 0 || n > MAX_HARMONICS {
        return Err(Error::parse(
            line,
            format!("n must lie in 1..={MAX_HARMONICS}"),
        ));
    }
    let model = TrigModel {
        a: parse_list(line, "a", fields["a"], n)?,
        b: parse_list(line, "b", fields["b"], n)?,
        c: parse_list(line, "c", fields["c"], n)?,
        d: parse_list(line, "d", fields["d"], n)?,
        omega: num("omega")?,
    };
    model
        .validate()
        .map_err(|e| Error::parse(line, e.to_string()))?;
    let period = num("period")?;
    if period <= 0.0 {
        return Err(Error::parse(line, "period must be positive"));
    }
    Ok(OrbitSolution {
        m,
        zeta: num("zeta")?,
        energy: num("energy")?,
        model,
        period,
        period_residual: num("period_residual")?,
        zeta1: num("zeta1")?,
    })
}

/// Parses a whole store; records are returned in file order.
pub fn parse_store(text: &str) -> Result<Vec<OrbitSolution>> {
    let mut header_seen = false;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != HEADER {
                return Err(Error::parse(i + 1, format!("expected header {HEADER:?}")));
            }
            header_seen = true;
            continue;
        }
        out.push(parse_record(line, i + 1)?);
    }
    if !header_seen {
        return Err(Error::parse(0, "empty store: missing header"));
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrbitStore {
    pub records: Vec<OrbitSolution>,
}

impl OrbitStore {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::parse(0, format!("{}: {e}", path.display())))?;
        Ok(OrbitStore {
            records: parse_store(&text)?,
        })
    }

    /// Appends one record, creating the file with its header if needed.
    pub fn append(path: &Path, sol: &OrbitSolution) -> std::io::Result<()> {
        let exists = path.exists() && fs::metadata(path)?.len() > 0;
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?;
        if !exists {
            writeln!(f, "{HEADER}")?;
        }
        writeln!(f, "{}", format_record(sol))
    }

    /// Newest record with exactly this mass.
    pub fn latest(&self, m: f64) -> Option<&OrbitSolution> {
        self.records.iter().rev().find(|r| r.m.get() == m)
    }

    /// Newest record among those closest in mass to `m`.
    pub fn nearest(&self, m: f64) -> Option<&OrbitSolution> {
        let mut best: Option<&OrbitSolution> = None;
        for r in self.records.iter().rev() {
            let better = match best {
                None => true,
                Some(b) => (r.m.get() - m).abs() < (b.m.get() - m).abs(),
            };
            if better {
                best = Some(r);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(m: f64, zeta: f64) -> OrbitSolution {
        let mut model = TrigModel::zeros(2);
        model.set_coefficients(&[1.0, 0.1, zeta, 0.2, -2.8, 0.01, 1.0 / 3.0, 0.0]);
        OrbitSolution {
            m: MassRatio::new(m).unwrap(),
            zeta,
            energy: -0.41955141290000001,
            model,
            period: 2.0 * std::f64::consts::PI,
            period_residual: 3.2e-11,
            zeta1: 1.5,
        }
    }

    #[test]
    fn record_round_trip_is_lossless() {
        let s = sample(0.7, 2.791_634_327_912_346);
        let back = parse_record(&format_record(&s), 1).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn newest_record_wins() {
        let text = format!(
            "{HEADER}\n# comment\n{}\n{}\n{}\n",
            format_record(&sample(1.0, 2.0)),
            format_record(&sample(0.5, 3.0)),
            format_record(&sample(1.0, 2.5)),
        );
        let store = OrbitStore {
            records: parse_store(&text).unwrap(),
        };
        assert_eq!(store.latest(1.0).unwrap().zeta, 2.5);
        assert_eq!(store.nearest(0.6).unwrap().zeta, 3.0);
        assert_eq!(store.nearest(0.9).unwrap().zeta, 2.5);
        assert!(store.latest(0.3).is_none());
    }

    #[test]
    fn rejects_malformed_input() {
        let good = format_record(&sample(1.0, 2.0));
        assert!(parse_store("").is_err());
        assert!(parse_store(&format!("format=other/9\n{good}")).is_err());
        assert!(parse_store(&format!("{HEADER}\n{good} extra=1")).is_err());
        assert!(parse_store(&format!("{HEADER}\n{}", good.replace("n=2", "n=3"))).is_err());
        assert!(parse_store(&format!("{HEADER}\n{}", good.replace("m=1", "m=2"))).is_err());
        assert!(parse_store(&format!("{HEADER}\n{good} m=1")).is_err());
        assert!(parse_store(&format!("{HEADER}\n{}", good.replace("zeta=", "zeta=nan,"))).is_err());
    }

    #[test]
    fn append_creates_header() {
        let dir = std::env::temp_dir().join(format!("rhomb-store-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("orbits.db");
        let _ = fs::remove_file(&path);
        OrbitStore::append(&path, &sample(1.0, 2.0)).unwrap();
        OrbitStore::append(&path, &sample(0.9, 2.1)).unwrap();
        let store = OrbitStore::load(&path).unwrap();
        assert_eq!(store.records.len(), 2);
        fs::remove_dir_all(&dir).unwrap();
    }
}
