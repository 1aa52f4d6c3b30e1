use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Reg2DFState, Vec4};

/// Truncated odd-harmonic trigonometric model of a symmetric orbit.
///
/// With `k = 2i + 1` and `u = omega * s`:
///
/// ```text
/// Q1 = Σ a_i sin(k u)          Q2 =  Σ b_i (-1)^i cos(k u)
/// P1 = -Σ c_i (-1)^i cos(k u)  P2 =  Σ d_i sin(k u)
/// ```
///
/// `omega = 1` for the 2π-normalized orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigModel {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub omega: f64,
}

#[inline]
fn alt(i: usize) -> f64 {
    if i.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

impl TrigModel {
    pub fn zeros(n: usize) -> Self {
        TrigModel {
            a: vec![0.0; n],
            b: vec![0.0; n],
            c: vec![0.0; n],
            d: vec![0.0; n],
            omega: 1.0,
        }
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 || self.b.len() != n || self.c.len() != n || self.d.len() != n {
            return Err(Error::InvalidParameter(
                "trig model needs n >= 1 coefficients in each of a, b, c, d".into(),
            ));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidParameter(
                "trig model frequency must be positive".into(),
            ));
        }
        if self.coefficients().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "non-finite trig coefficient".into(),
            ));
        }
        Ok(())
    }

    /// Truncated or zero-padded to `n` harmonics.
    pub fn resized(&self, n: usize) -> Self {
        let fit = |v: &[f64]| {
            let mut out = v[..n.min(v.len())].to_vec();
            out.resize(n, 0.0);
            out
        };
        TrigModel {
            a: fit(&self.a),
            b: fit(&self.b),
            c: fit(&self.c),
            d: fit(&self.d),
            omega: self.omega,
        }
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// Coefficients flattened as `a ‖ b ‖ c ‖ d`.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(4 * self.n());
        v.extend_from_slice(&self.a);
        v.extend_from_slice(&self.b);
        v.extend_from_slice(&self.c);
        v.extend_from_slice(&self.d);
        v
    }

    pub fn set_coefficients(&mut self, v: &[f64]) {
        let n = self.n();
        assert_eq!(v.len(), 4 * n);
        self.a.copy_from_slice(&v[..n]);
        self.b.copy_from_slice(&v[n..2 * n]);
        self.c.copy_from_slice(&v[2 * n..3 * n]);
        self.d.copy_from_slice(&v[3 * n..]);
    }

    pub fn eval(&self, s: f64) -> Reg2DFState {
        let u = self.omega * s;
        let (mut q1, mut q2, mut p1, mut p2) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..self.n() {
            let k = (2 * i + 1) as f64;
            let (sn, cs) = (k * u).sin_cos();
            let sg = alt(i);
            q1 += self.a[i] * sn;
            q2 += self.b[i] * sg * cs;
            p1 -= self.c[i] * sg * cs;
            p2 += self.d[i] * sn;
        }
        Reg2DFState::new(q1, q2, p1, p2)
    }

    /// Analytic derivative with respect to `s`.
    pub fn derivative(&self, s: f64) -> Vec4 {
        let u = self.omega * s;
        let mut out = Vec4::zeros();
        for i in 0..self.n() {
            let k = (2 * i + 1) as f64;
            let w = k * self.omega;
            let (sn, cs) = (k * u).sin_cos();
            let sg = alt(i);
            out[0] += self.a[i] * w * cs;
            out[1] -= self.b[i] * sg * w * sn;
            out[2] += self.c[i] * sg * w * sn;
            out[3] += self.d[i] * w * cs;
        }
        out
    }

    /// Q2(0), the collision amplitude carried by the model.
    pub fn zeta(&self) -> f64 {
        self.b.iter().enumerate().map(|(i, b)| alt(i) * b).sum()
    }

    /// P1(0).
    pub fn p1_at_zero(&self) -> f64 {
        -self
            .c
            .iter()
            .enumerate()
            .map(|(i, c)| alt(i) * c)
            .sum::<f64>()
    }

    /// Model of `εQ(εs), P(εs)`.
    pub fn rescaled(&self, eps: f64) -> Self {
        TrigModel {
            a: self.a.iter().map(|v| v * eps).collect(),
            b: self.b.iter().map(|v| v * eps).collect(),
            c: self.c.clone(),
            d: self.d.clone(),
            omega: self.omega * eps,
        }
    }

    /// Projects uniformly spaced samples of one period onto the odd-harmonic
    /// basis. `samples[j]` is the state at `s_j = j T / N`.
    pub fn project(samples: &[Vec4], n: usize, omega: f64) -> Result<Self> {
        let big_n = samples.len();
        if big_n < 4 * n + 2 {
            return Err(Error::InvalidParameter(format!(
                "{big_n} samples cannot resolve {n} odd harmonics"
            )));
        }
        let mut model = TrigModel::zeros(n);
        model.omega = omega;
        let w = 2.0 / big_n as f64;
        for (j, z) in samples.iter().enumerate() {
            let u = 2.0 * PI * j as f64 / big_n as f64;
            for i in 0..n {
                let k = (2 * i + 1) as f64;
                let (sn, cs) = (k * u).sin_cos();
                let sg = alt(i);
                model.a[i] += w * z[0] * sn;
                model.b[i] += w * sg * z[1] * cs;
                model.c[i] -= w * sg * z[2] * cs;
                model.d[i] += w * z[3] * sn;
            }
        }
        Ok(model)
    }

    /// `max(|a_i|, |b_i|, |c_i|, |d_i|)` per harmonic index.
    pub fn harmonic_magnitudes(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                self.a[i]
                    .abs()
                    .max(self.b[i].abs())
                    .max(self.c[i].abs())
                    .max(self.d[i].abs())
            })
            .collect()
    }

    /// Orders of magnitude between the first and last harmonic.
    pub fn decay_orders(&self) -> f64 {
        let h = self.harmonic_magnitudes();
        let last = h[h.len() - 1].max(f64::MIN_POSITIVE);
        (h[0] / last).log10()
    }
}

/// Precomputed `sin(k s_j)`, `(-1)^i cos(k s_j)` on a uniform grid over
/// `[0, 2π)` for a unit-frequency model.
pub(crate) struct Basis {
    pub nodes: Vec<f64>,
    pub sin: Vec<f64>,
    pub cos_alt: Vec<f64>,
    pub n: usize,
}

impl Basis {
    pub fn new(n: usize, nodes: usize) -> Self {
        let mut sin = Vec::with_capacity(n * nodes);
        let mut cos_alt = Vec::with_capacity(n * nodes);
        let grid: Vec<f64> = (0..nodes)
            .map(|j| 2.0 * PI * j as f64 / nodes as f64)
            .collect();
        for &s in &grid {
            for i in 0..n {
                let k = (2 * i + 1) as f64;
                let (sn, cs) = (k * s).sin_cos();
                sin.push(sn);
                cos_alt.push(alt(i) * cs);
            }
        }
        Basis {
            nodes: grid,
            sin,
            cos_alt,
            n,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    pub fn row_sin(&self, j: usize) -> &[f64] {
        &self.sin[j * self.n..(j + 1) * self.n]
    }

    #[inline]
    pub fn row_cos(&self, j: usize) -> &[f64] {
        &self.cos_alt[j * self.n..(j + 1) * self.n]
    }

    /// State and s-derivative at node `j` for a unit-frequency model.
    pub fn eval(&self, model: &TrigModel, j: usize) -> (Vec4, Vec4) {
        let (sn, ca) = (self.row_sin(j), self.row_cos(j));
        let mut z = Vec4::zeros();
        let mut dz = Vec4::zeros();
        for i in 0..self.n {
            let k = (2 * i + 1) as f64;
            z[0] += model.a[i] * sn[i];
            z[1] += model.b[i] * ca[i];
            z[2] -= model.c[i] * ca[i];
            z[3] += model.d[i] * sn[i];
            // d/ds of (-1)^i cos(k s) is -(-1)^i k sin(k s)
            let sa = alt(i) * sn[i];
            dz[0] += model.a[i] * k * ca[i] * alt(i);
            dz[1] -= model.b[i] * k * sa;
            dz[2] += model.c[i] * k * sa;
            dz[3] += model.d[i] * k * ca[i] * alt(i);
        }
        (z, dz)
    }
}
