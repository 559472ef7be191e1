//! Exact action of the zero-range generator `L_n`, its adjoint and its
//! symmetric/antisymmetric parts on local functions, plus finite-state
//! oracles and pointwise identity checks.

mod identities;
mod oracle;

use std::fmt;
use std::sync::Arc;

pub use identities::{expansion_identity_suite, oracle_report_json, IdentityGap, IdentityReport};
pub use oracle::{
    build_generator_matrix, canonical_measure, change_of_variables_gap, expectation, h1_norm, h1_norm_vec,
    h_minus1_norm, h_minus1_norm_vec, ibp_check, ibp_check_monte_carlo, kipnis_varadhan_check,
    stationarity_residual, stationary_distribution, total_variation, FiniteStateSpace, GeneratorMatrix, IbpResult,
    KipnisVaradhan, DENSE_CAP, STATE_CAP,
};

use crate::rates::{eval_gn, RateFunction};

type Evaluator = dyn Fn(&[u32]) -> f64 + Send + Sync;

/// A function of the occupancies on the window `start, start + 1, ...,
/// start + len - 1` (indices taken mod `L`).
#[derive(Clone)]
pub struct LocalFunction {
    start: usize,
    len: usize,
    eval: Arc<Evaluator>,
    description: String,
}

impl fmt::Debug for LocalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LocalFunction")
            .field("start", &self.start)
            .field("len", &self.len)
            .field("description", &self.description)
            .finish()
    }
}

impl LocalFunction {
    pub fn new(
        start: usize,
        len: usize,
        description: impl Into<String>,
        eval: impl Fn(&[u32]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        LocalFunction { start, len, eval: Arc::new(eval), description: description.into() }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(0, 0, format!("{c}"), move |_| c)
    }

    /// `h(eta_j)`.
    pub fn site(j: usize, description: impl Into<String>, h: impl Fn(u32) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(j, 1, description, move |w| h(w[0]))
    }

    pub fn occupation(j: usize) -> Self {
        Self::site(j, format!("eta_{j}"), |k| k as f64)
    }

    /// `eta_j * eta_{j+1}`.
    pub fn neighbour_product(j: usize) -> Self {
        Self::new(j, 2, format!("eta_{j} eta_{}", j + 1), |w| w[0] as f64 * w[1] as f64)
    }

    /// `g_n(eta_j)`.
    pub fn site_rate(j: usize, n: u32, g: &RateFunction) -> Self {
        let g = g.clone();
        Self::site(j, format!("g_n(eta_{j})"), move |k| eval_gn(k, n, &g))
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn window_len(&self) -> usize {
        self.len
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// The same function read `k` sites further to the right.
    pub fn shifted(&self, k: usize) -> Self {
        LocalFunction {
            start: self.start + k,
            len: self.len,
            eval: Arc::clone(&self.eval),
            description: format!("tau_{k} {}", self.description),
        }
    }

    fn window(&self, eta: &[u32]) -> Vec<u32> {
        let l = eta.len();
        assert!(self.len <= l, "window of {} sites does not fit on {l} sites", self.len);
        (0..self.len).map(|i| eta[(self.start + i) % l]).collect()
    }

    pub fn evaluate(&self, eta: &[u32]) -> f64 {
        (self.eval)(&self.window(eta))
    }

    /// Sum over jumps `j -> j + dir` (dir = +1 or -1, mod `L`) touching the
    /// window of `rate(eta_j) * (f(after) - f(before))`.
    fn jump_sum(&self, eta: &[u32], dir: isize, rate: impl Fn(u32) -> f64) -> f64 {
        let l = eta.len();
        if self.len == 0 {
            return 0.0;
        }
        let base = self.window(eta);
        let f0 = (self.eval)(&base);
        let li = l as isize;
        // Sources whose jump changes a window site: the window itself plus
        // the neighbour that feeds into its edge.
        let sources: Vec<usize> = if self.len + 2 >= l {
            (0..l).collect()
        } else {
            let s = self.start as isize;
            let range = if dir > 0 { (s - 1)..(s + self.len as isize) } else { s..(s + self.len as isize + 1) };
            range.map(|j| j.rem_euclid(li) as usize).collect()
        };
        let mut scratch = base.clone();
        let mut total = 0.0;
        for j in sources {
            if eta[j] == 0 {
                continue;
            }
            let target = (j as isize + dir).rem_euclid(li) as usize;
            scratch.copy_from_slice(&base);
            let mut touched = false;
            for (i, slot) in scratch.iter_mut().enumerate() {
                let site = (self.start + i) % l;
                if site == j {
                    *slot -= 1;
                    touched = true;
                } else if site == target {
                    *slot += 1;
                    touched = true;
                }
            }
            if touched {
                total += rate(eta[j]) * ((self.eval)(&scratch) - f0);
            }
        }
        total
    }
}

/// `L_n f(eta) = n^2 sum_j g_n(eta_j) (f(eta^{j,j+1}) - f(eta))`.
pub fn apply_generator(f: &LocalFunction, eta: &[u32], n: u32, g: &RateFunction) -> f64 {
    let n2 = (n as f64).powi(2);
    n2 * f.jump_sum(eta, 1, |k| eval_gn(k, n, g))
}

/// `L*_n f(eta) = n^2 sum_j g_n(eta_j) (f(eta^{j,j-1}) - f(eta))`.
pub fn apply_adjoint(f: &LocalFunction, eta: &[u32], n: u32, g: &RateFunction) -> f64 {
    let n2 = (n as f64).powi(2);
    n2 * f.jump_sum(eta, -1, |k| eval_gn(k, n, g))
}

/// `(L_n + L*_n) / 2`.
pub fn symmetric_part(f: &LocalFunction, eta: &[u32], n: u32, g: &RateFunction) -> f64 {
    0.5 * (apply_generator(f, eta, n, g) + apply_adjoint(f, eta, n, g))
}

/// `(L_n - L*_n) / 2`.
pub fn antisymmetric_part(f: &LocalFunction, eta: &[u32], n: u32, g: &RateFunction) -> f64 {
    0.5 * (apply_generator(f, eta, n, g) - apply_adjoint(f, eta, n, g))
}

/// `f(eta^{j,j+1}) - f(eta)`, taken as 0 when site `j` is empty.
pub fn discrete_gradient(f: &LocalFunction, eta: &[u32], j: usize) -> f64 {
    if eta[j] == 0 {
        return 0.0;
    }
    let mut moved = eta.to_vec();
    moved[j] -= 1;
    let k = (j + 1) % eta.len();
    moved[k] += 1;
    f.evaluate(&moved) - f.evaluate(eta)
}

/// `W = g_n(k) / g'(0)`.
#[inline]
pub fn w_value(k: u32, n: u32, g: &RateFunction) -> f64 {
    eval_gn(k, n, g) / g.d1_at_0
}
