//! Microscopic jump-rate profiles `g`, their diffusively scaled versions
//! `g_n(k) = sqrt(n) g(k / sqrt(n))`, the moving-frame constants and the
//! coefficients of the limiting stochastic Burgers equation.
//!
//! Derivatives at the origin are stored analytically for every built-in
//! profile; nothing is differentiated numerically outside of tests.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Built-in rate profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateKind {
    /// `g(x) = 1 - exp(-x)`: the zero-range image of q-TASEP.
    QTasep,
    /// `g(x) = tanh(x)`: vanishing second derivative at 0.
    Tanh,
    /// `g(x) = c x`. Test fixture only: unbounded, so it violates the
    /// boundedness part of the regularity assumption, but its invariant
    /// measures are Poisson.
    Linear,
}

/// A jump-rate profile together with its derivatives at the origin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFunction {
    kind: RateKind,
    slope: f64,
    pub d1_at_0: f64,
    pub d2_at_0: f64,
    pub d3_at_0: f64,
    pub d4_at_0: f64,
    /// `sup_x |g''''(x)|`, the Lagrange constant for the cubic Taylor remainder.
    pub d4_sup: f64,
    /// `sup_x g(x)`; `None` marks an unbounded profile.
    pub sup_bound: Option<f64>,
    pub name: &'static str,
}

impl RateFunction {
    pub fn qtasep() -> Self {
        RateFunction {
            kind: RateKind::QTasep,
            slope: 1.0,
            d1_at_0: 1.0,
            d2_at_0: -1.0,
            d3_at_0: 1.0,
            d4_at_0: -1.0,
            d4_sup: 1.0,
            sup_bound: Some(1.0),
            name: "qtasep",
        }
    }

    pub fn tanh() -> Self {
        // tanh'''' = 8 t (1 - t^2)(2 - 3 t^2) with t = tanh x; the maximum of
        // |.| over t in [0, 1) sits at t^2 = (15 - sqrt(105)) / 30.
        let t2 = (15.0 - 105f64.sqrt()) / 30.0;
        let t = t2.sqrt();
        let d4_sup = 8.0 * t * (1.0 - t2) * (2.0 - 3.0 * t2);
        RateFunction {
            kind: RateKind::Tanh,
            slope: 1.0,
            d1_at_0: 1.0,
            d2_at_0: 0.0,
            d3_at_0: -2.0,
            d4_at_0: 0.0,
            d4_sup,
            sup_bound: Some(1.0),
            name: "tanh",
        }
    }

    pub fn linear() -> Self {
        Self::linear_with_slope(1.0)
    }

    pub fn linear_with_slope(slope: f64) -> Self {
        assert!(slope > 0.0, "linear rate needs a positive slope");
        RateFunction {
            kind: RateKind::Linear,
            slope,
            d1_at_0: slope,
            d2_at_0: 0.0,
            d3_at_0: 0.0,
            d4_at_0: 0.0,
            d4_sup: 0.0,
            sup_bound: None,
            name: "linear",
        }
    }

    pub fn from_kind(kind: RateKind) -> Self {
        match kind {
            RateKind::QTasep => Self::qtasep(),
            RateKind::Tanh => Self::tanh(),
            RateKind::Linear => Self::linear(),
        }
    }

    pub fn kind(&self) -> RateKind {
        self.kind
    }

    /// `g(x)` for `x >= 0`.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            RateKind::QTasep => -(-x).exp_m1(),
            RateKind::Tanh => x.tanh(),
            RateKind::Linear => self.slope * x,
        }
    }

    /// Radius of convergence `alpha*_n = lim_k g_n(k) = sqrt(n) sup g`.
    pub fn radius(&self, n: u32) -> f64 {
        match self.sup_bound {
            Some(s) => (n as f64).sqrt() * s,
            None => f64::INFINITY,
        }
    }
}

impl fmt::Display for RateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

impl FromStr for RateFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qtasep" => Ok(Self::qtasep()),
            "tanh" => Ok(Self::tanh()),
            "linear" => Ok(Self::linear()),
            other => Err(Error::UnknownRate(other.to_string())),
        }
    }
}

/// `g_n(k) = sqrt(n) g(k / sqrt(n))`.
#[inline]
pub fn eval_gn(k: u32, n: u32, g: &RateFunction) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let s = (n as f64).sqrt();
    match g.kind {
        RateKind::Linear => g.slope * k as f64,
        _ => s * g.eval(k as f64 / s),
    }
}

/// `log g_n!(k) = sum_{i=1..k} log g_n(i)`, zero for the empty product.
pub fn gn_log_factorial(k: u32, n: u32, g: &RateFunction) -> f64 {
    (1..=k).map(|i| eval_gn(i, n, g).ln()).sum()
}

/// Cached table of `g_n(k)` for the simulation hot loop.
#[derive(Debug, Clone)]
pub struct RateTable {
    g: RateFunction,
    n: u32,
    values: Vec<f64>,
}

impl RateTable {
    pub fn new(g: &RateFunction, n: u32, kmax: u32) -> Self {
        let values = (0..=kmax).map(|k| eval_gn(k, n, g)).collect();
        RateTable { g: g.clone(), n, values }
    }

    #[inline]
    pub fn gn(&self, k: u32) -> f64 {
        match self.values.get(k as usize) {
            Some(v) => *v,
            None => eval_gn(k, self.n, &self.g),
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn rate_function(&self) -> &RateFunction {
        &self.g
    }
}

/// Constants of the moving frame `f_n = b2 n^2 + b1 n^{3/2} + b0 n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramingCoefficients {
    pub b2: f64,
    pub b1: f64,
    pub b0: f64,
    pub n: u32,
    pub phi_n_rho: f64,
}

impl FramingCoefficients {
    /// Frame speed `f_n` in lattice sites per unit macroscopic time.
    pub fn speed(&self) -> f64 {
        let n = self.n as f64;
        self.b2 * n * n + self.b1 * n * n.sqrt() + self.b0 * n
    }
}

pub fn framing_coefficients(g: &RateFunction, phi: f64, n: u32) -> FramingCoefficients {
    let (d1, d2, d3) = (g.d1_at_0, g.d2_at_0, g.d3_at_0);
    let b2 = d1;
    let b1 = 0.5 * d2 * (1.0 + 2.0 * phi);
    let b0 = d3 / (6.0 * d1) * (1.0 + 6.0 * phi + 3.0 * phi * phi)
        - d2 * d2 / (4.0 * d1 * d1) * (1.0 + 10.0 * phi + 9.0 * phi * phi);
    FramingCoefficients { b2, b1, b0, n, phi_n_rho: phi }
}

/// Lattice displacement `f_n t` of the frame after macroscopic time `t`.
pub fn frame_offset(t: f64, fc: &FramingCoefficients, n: u32) -> f64 {
    debug_assert!(t >= 0.0);
    let n = n as f64;
    (fc.b2 * n * n + fc.b1 * n.powf(1.5) + fc.b0 * n) * t
}

/// Coefficients of `du = nu u'' - lambda (u^2)' + sqrt(D) dW'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbeCoefficients {
    pub viscosity: f64,
    pub nonlinearity: f64,
    pub noise: f64,
}

pub fn sbe_coefficients(g: &RateFunction, rho: f64) -> SbeCoefficients {
    assert!(rho > 0.0, "density must be positive");
    SbeCoefficients {
        viscosity: g.d1_at_0 / 2.0,
        nonlinearity: -g.d2_at_0 / 2.0,
        noise: g.d1_at_0 * rho,
    }
}
