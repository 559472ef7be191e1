use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{discrete_gradient, w_value, LocalFunction};
use crate::error::{Error, Result};
use crate::rates::{eval_gn, gn_log_factorial, RateFunction};

/// Largest state space that is enumerated and stored.
pub const STATE_CAP: usize = 20_000;
/// Largest state space that is densified for LU solves and exponentials.
pub const DENSE_CAP: usize = 4_000;

/// Every configuration of `N` particles on a torus of `L` sites.
#[derive(Debug, Clone)]
pub struct FiniteStateSpace {
    sites: usize,
    particles: u32,
    states: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

impl FiniteStateSpace {
    pub fn new(sites: usize, particles: u32) -> Result<Self> {
        if sites == 0 {
            return Err(Error::InvalidArgument("state space needs at least one site".into()));
        }
        let count = binomial(particles as u64 + sites as u64 - 1, sites as u64 - 1);
        if count > STATE_CAP as u128 {
            return Err(Error::StateSpaceTooLarge { states: count.min(usize::MAX as u128) as usize, cap: STATE_CAP });
        }
        let mut states = Vec::with_capacity(count as usize);
        let mut current = vec![0u32; sites];
        fill(&mut current, 0, particles, &mut states);
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(FiniteStateSpace { sites, particles, states, index })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn particles(&self) -> u32 {
        self.particles
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<u32>] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &[u32] {
        &self.states[i]
    }

    pub fn index_of(&self, eta: &[u32]) -> Option<usize> {
        self.index.get(eta).copied()
    }

    pub fn tabulate(&self, f: impl Fn(&[u32]) -> f64) -> Vec<f64> {
        self.states.iter().map(|s| f(s)).collect()
    }
}

fn fill(current: &mut [u32], pos: usize, left: u32, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == current.len() {
        current[pos] = left;
        out.push(current.to_vec());
        return;
    }
    for k in (0..=left).rev() {
        current[pos] = k;
        fill(current, pos + 1, left - k, out);
    }
}

/// Sparse generator: off-diagonal rates per row plus the diagonal.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    rows: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.diag[i]
    }

    /// Entry `(i, j)`, summing parallel transitions.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let off: f64 = self.rows[i].iter().filter(|(c, _)| *c == j).map(|(_, r)| r).sum();
        if i == j {
            off + self.diag[i]
        } else {
            off
        }
    }

    pub fn max_row_sum(&self) -> f64 {
        (0..self.dim())
            .map(|i| (self.diag[i] + self.rows[i].iter().map(|(_, r)| r).sum::<f64>()).abs())
            .fold(0.0, f64::max)
    }

    /// `G f`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.diag[i] * f[i] + self.rows[i].iter().map(|&(j, r)| r * f[j]).sum::<f64>())
            .collect()
    }

    /// `p^T G`.
    pub fn left_apply(&self, p: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.diag.iter().zip(p).map(|(d, x)| d * x).collect();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, r) in row {
                out[j] += p[i] * r;
            }
        }
        out
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if d > DENSE_CAP {
            return Err(Error::StateSpaceTooLarge { states: d, cap: DENSE_CAP });
        }
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            m[(i, i)] += self.diag[i];
            for &(j, r) in &self.rows[i] {
                m[(i, j)] += r;
            }
        }
        Ok(m)
    }

    /// `G*` with `G*_{ab} = pi_b G_{ba} / pi_a`.
    fn adjoint_dense(&self, pi: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.to_dense()?;
        let d = self.dim();
        Ok(DMatrix::from_fn(d, d, |a, b| pi[b] * g[(b, a)] / pi[a]))
    }
}

/// Generator of the zero-range dynamics restricted to `fss`.
pub fn build_generator_matrix(fss: &FiniteStateSpace, n: u32, g: &RateFunction) -> Result<GeneratorMatrix> {
    let n2 = (n as f64).powi(2);
    let l = fss.sites();
    let mut rows = Vec::with_capacity(fss.len());
    let mut diag = Vec::with_capacity(fss.len());
    let mut scratch = vec![0u32; l];
    for state in fss.states() {
        let mut row = Vec::new();
        let mut out = 0.0;
        for j in 0..l {
            if state[j] == 0 {
                continue;
            }
            let rate = n2 * eval_gn(state[j], n, g);
            scratch.copy_from_slice(state);
            scratch[j] -= 1;
            scratch[(j + 1) % l] += 1;
            let target = fss.index_of(&scratch).expect("jump stays in the state space");
            row.push((target, rate));
            out += rate;
        }
        rows.push(row);
        diag.push(-out);
    }
    Ok(GeneratorMatrix { rows, diag })
}

/// Product measure conditioned on `sum eta = N`.
pub fn canonical_measure(fss: &FiniteStateSpace, alpha: f64, n: u32, g: &RateFunction) -> Vec<f64> {
    let log_alpha = alpha.ln();
    let logw: Vec<f64> = fss
        .states()
        .iter()
        .map(|s| s.iter().map(|&k| k as f64 * log_alpha - gn_log_factorial(k, n, g)).sum())
        .collect();
    let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Solves `pi^T G = 0`, `sum pi = 1` by dense LU.
pub fn stationary_distribution(gm: &GeneratorMatrix) -> Result<Vec<f64>> {
    let d = gm.dim();
    let mut a = gm.to_dense()?.transpose();
    for c in 0..d {
        a[(d - 1, c)] = 1.0;
    }
    let mut b = DVector::zeros(d);
    b[d - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidArgument("generator is not irreducible".into()))?;
    Ok(x.iter().copied().collect())
}

/// `max |(pi^T G)_i|`.
pub fn stationarity_residual(gm: &GeneratorMatrix, pi: &[f64]) -> f64 {
    gm.left_apply(pi).iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

pub fn expectation(fss: &FiniteStateSpace, pi: &[f64], f: impl Fn(&[u32]) -> f64) -> f64 {
    fss.states().iter().zip(pi).map(|(s, p)| p * f(s)).sum()
}

/// Both sides of `E[f (W_j - W_{j+1})] = -E[(grad_{j,j+1} f) W_j]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IbpResult {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    /// Standard error of the gap for sampled measures.
    pub standard_error: Option<f64>,
}

fn ibp_terms(f: &LocalFunction, j: usize, eta: &[u32], n: u32, g: &RateFunction) -> (f64, f64) {
    let k = (j + 1) % eta.len();
    let wj = w_value(eta[j], n, g);
    let lhs = f.evaluate(eta) * (wj - w_value(eta[k], n, g));
    let rhs = -discrete_gradient(f, eta, j) * wj;
    (lhs, rhs)
}

/// Integration by parts under the canonical measure `pi` on `fss`.
pub fn ibp_check(
    f: &LocalFunction,
    j: usize,
    fss: &FiniteStateSpace,
    pi: &[f64],
    n: u32,
    g: &RateFunction,
) -> IbpResult {
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for (s, p) in fss.states().iter().zip(pi) {
        let (a, b) = ibp_terms(f, j, s, n, g);
        lhs += p * a;
        rhs += p * b;
    }
    IbpResult { lhs, rhs, gap: lhs - rhs, standard_error: None }
}

/// Integration by parts averaged over sampled configurations.
pub fn ibp_check_monte_carlo<'a>(
    f: &LocalFunction,
    j: usize,
    samples: impl IntoIterator<Item = &'a [u32]>,
    n: u32,
    g: &RateFunction,
) -> IbpResult {
    let (mut m, mut lhs, mut rhs, mut d_sum, mut d_sq) = (0usize, 0.0, 0.0, 0.0, 0.0);
    for s in samples {
        let (a, b) = ibp_terms(f, j, s, n, g);
        lhs += a;
        rhs += b;
        d_sum += a - b;
        d_sq += (a - b) * (a - b);
        m += 1;
    }
    let mf = m as f64;
    let mean = d_sum / mf;
    let var = (d_sq / mf - mean * mean) * mf / (mf - 1.0);
    IbpResult { lhs: lhs / mf, rhs: rhs / mf, gap: mean, standard_error: Some((var / mf).sqrt()) }
}

/// `|E[f g_n(eta_{j+1})] - E[f(eta^{j,j+1}) g_n(eta_j)]|` on `fss`.
pub fn change_of_variables_gap(
    f: &LocalFunction,
    j: usize,
    fss: &FiniteStateSpace,
    pi: &[f64],
    n: u32,
    g: &RateFunction,
) -> f64 {
    let l = fss.sites();
    let k = (j + 1) % l;
    let lhs = expectation(fss, pi, |s| f.evaluate(s) * eval_gn(s[k], n, g));
    let rhs = expectation(fss, pi, |s| {
        if s[j] == 0 {
            return 0.0;
        }
        let mut m = s.to_vec();
        m[j] -= 1;
        m[k] += 1;
        f.evaluate(&m) * eval_gn(s[j], n, g)
    });
    (lhs - rhs).abs()
}

/// `||F||_1^2 = (n^2 / 2) sum_j E[g_n(eta_j) (grad_{j,j+1} F)^2]`, which
/// equals `<F, -S F>` under an invariant measure.
pub fn h1_norm(f: &LocalFunction, fss: &FiniteStateSpace, pi: &[f64], n: u32, g: &RateFunction) -> f64 {
    let values = fss.tabulate(|s| f.evaluate(s));
    h1_norm_vec(fss, pi, n, g, &values)
}

/// [`h1_norm`] for an arbitrary function given by its values on `fss`.
pub fn h1_norm_vec(fss: &FiniteStateSpace, pi: &[f64], n: u32, g: &RateFunction, f: &[f64]) -> f64 {
    let n2 = (n as f64).powi(2);
    let l = fss.sites();
    let mut scratch = vec![0u32; l];
    let mut total = 0.0;
    for (i, s) in fss.states().iter().enumerate() {
        for j in 0..l {
            if s[j] == 0 {
                continue;
            }
            scratch.copy_from_slice(s);
            scratch[j] -= 1;
            scratch[(j + 1) % l] += 1;
            let t = fss.index_of(&scratch).expect("jump stays in the state space");
            let d = f[t] - f[i];
            total += pi[i] * eval_gn(s[j], n, g) * d * d;
        }
    }
    0.5 * n2 * total
}

fn centered_check(pi: &[f64], f: &[f64]) -> Result<()> {
    let mean: f64 = pi.iter().zip(f).map(|(p, x)| p * x).sum();
    if mean.abs() > 1e-10 {
        return Err(Error::NotCentered { mean });
    }
    Ok(())
}

/// Solves `(M + 1 pi^T) u = F` for a generator-like `M` with `pi^T M = 0`;
/// for centered `F` this gives `M u = F` with `pi^T u = 0`.
fn solve_centered(m: DMatrix<f64>, pi: &[f64], f: &[f64]) -> Result<DVector<f64>> {
    let d = pi.len();
    let a = DMatrix::from_fn(d, d, |i, j| m[(i, j)] + pi[j]);
    a.lu()
        .solve(&DVector::from_column_slice(f))
        .ok_or_else(|| Error::InvalidArgument("singular operator".into()))
}

/// `||F||_{-1}^2 = <F, (-S)^{-1} F>` for a centered local `F`.
pub fn h_minus1_norm(f: &LocalFunction, fss: &FiniteStateSpace, pi: &[f64], gm: &GeneratorMatrix) -> Result<f64> {
    let values = fss.tabulate(|s| f.evaluate(s));
    Ok(h_minus1_norm_vec(gm, pi, &values)?.0)
}

/// `||F||_{-1}^2` together with the maximiser `u = (-S)^{-1} F` of the
/// variational formula.
pub fn h_minus1_norm_vec(gm: &GeneratorMatrix, pi: &[f64], f: &[f64]) -> Result<(f64, Vec<f64>)> {
    centered_check(pi, f)?;
    let minus_s = -(gm.to_dense()? + gm.adjoint_dense(pi)?) * 0.5;
    let u = solve_centered(minus_s, pi, f)?;
    let value = pi.iter().zip(f).zip(u.iter()).map(|((p, a), b)| p * a * b).sum();
    Ok((value, u.iter().copied().collect()))
}

/// Exact second moment of an additive functional against the
/// Kipnis-Varadhan bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KipnisVaradhan {
    pub t: f64,
    /// `E[(int_0^t F(eta_s) ds)^2]` started from `pi`.
    pub second_moment: f64,
    pub h_minus1: f64,
    /// `24 t ||F||_{-1}^2`.
    pub bound: f64,
    /// `2 <F, (-G)^{-1} F>`, the limit of `second_moment / t`.
    pub asymptotic_rate: f64,
}

impl KipnisVaradhan {
    pub fn holds(&self) -> bool {
        self.second_moment <= self.bound && self.asymptotic_rate <= 2.0 * self.h_minus1 * (1.0 + 1e-9)
    }
}

/// Uses `E[(int_0^t F)^2] = 2 int_0^t (t - s) <F, e^{sG} F> ds`, evaluated by
/// a block matrix exponential.
pub fn kipnis_varadhan_check(gm: &GeneratorMatrix, pi: &[f64], f: &[f64], t: f64) -> Result<KipnisVaradhan> {
    let (h_minus1, _) = h_minus1_norm_vec(gm, pi, f)?;
    let g = gm.to_dense()?;
    let d = gm.dim();
    let mut block = DMatrix::zeros(3 * d, 3 * d);
    block.view_mut((0, 0), (d, d)).copy_from(&(&g * t));
    for i in 0..d {
        block[(i, d + i)] = t;
        block[(d + i, 2 * d + i)] = t;
    }
    let e = block.exp();
    // Top-right block: int_0^t (t - s) e^{sG} ds.
    let k = e.view((0, 2 * d), (d, d)).into_owned();
    let kf = &k * DVector::from_column_slice(f);
    let second_moment = 2.0 * pi.iter().zip(f).zip(kf.iter()).map(|((p, a), b)| p * a * b).sum::<f64>();
    let u = solve_centered(-g, pi, f)?;
    let asymptotic_rate = 2.0 * pi.iter().zip(f).zip(u.iter()).map(|((p, a), b)| p * a * b).sum::<f64>();
    Ok(KipnisVaradhan { t, second_moment, h_minus1, bound: 24.0 * t * h_minus1, asymptotic_rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{apply_adjoint, apply_generator, symmetric_part};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(l: usize, np: u32, n: u32, g: &RateFunction) -> (FiniteStateSpace, GeneratorMatrix, Vec<f64>) {
        let fss = FiniteStateSpace::new(l, np).unwrap();
        let gm = build_generator_matrix(&fss, n, g).unwrap();
        let pi = canonical_measure(&fss, 0.7, n, g);
        (fss, gm, pi)
    }

    fn centered(pi: &[f64], mut f: Vec<f64>) -> Vec<f64> {
        let m: f64 = pi.iter().zip(&f).map(|(p, x)| p * x).sum();
        f.iter_mut().for_each(|x| *x -= m);
        f
    }

    #[test]
    fn enumeration() {
        let fss = FiniteStateSpace::new(4, 3).unwrap();
        assert_eq!(fss.len(), 20);
        for (i, s) in fss.states().iter().enumerate() {
            assert_eq!(fss.index_of(s), Some(i));
            assert_eq!(s.iter().sum::<u32>(), 3);
        }
        assert_eq!(FiniteStateSpace::new(5, 0).unwrap().len(), 1);
        assert!(matches!(FiniteStateSpace::new(12, 12), Err(Error::StateSpaceTooLarge { .. })));
    }

    #[test]
    fn two_ring() {
        let g = RateFunction::qtasep();
        let (fss, gm, _) = setup(2, 1, 4, &g);
        assert_eq!(fss.len(), 2);
        let r = 16.0 * eval_gn(1, 4, &g);
        let a = fss.index_of(&[1, 0]).unwrap();
        let b = fss.index_of(&[0, 1]).unwrap();
        assert_eq!(gm.entry(a, b), r);
        assert_eq!(gm.entry(b, a), r);
        assert!(gm.max_row_sum() < 1e-12);
    }

    #[test]
    fn stationary_vector_matches_canonical() {
        for g in [RateFunction::qtasep(), RateFunction::linear(), RateFunction::tanh()] {
            let (_, gm, pi) = setup(4, 3, 2, &g);
            assert!(stationarity_residual(&gm, &pi) < 1e-10);
            let solved = stationary_distribution(&gm).unwrap();
            assert!(total_variation(&pi, &solved) < 1e-10);
        }
    }

    #[test]
    fn canonical_measure_cases() {
        let g = RateFunction::qtasep();
        let empty = FiniteStateSpace::new(3, 0).unwrap();
        assert_eq!(canonical_measure(&empty, 0.3, 4, &g), vec![1.0]);
        let fss = FiniteStateSpace::new(4, 3).unwrap();
        let a = canonical_measure(&fss, 0.2, 4, &g);
        let b = canonical_measure(&fss, 1.7, 4, &g);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-14));
        // Linear rates give Bose weights prod 1 / eta_j!.
        let lin = canonical_measure(&fss, 1.0, 1, &RateFunction::linear());
        let fact = |k: u32| (1..=k).product::<u32>() as f64;
        let w: Vec<f64> = fss.states().iter().map(|s| s.iter().map(|&k| 1.0 / fact(k)).product()).collect();
        let z: f64 = w.iter().sum();
        for (p, x) in lin.iter().zip(&w) {
            assert!((p - x / z).abs() < 1e-14);
        }
    }

    #[test]
    fn adjoint_and_dirichlet_form() {
        let g = RateFunction::qtasep();
        let n = 4;
        let (fss, gm, pi) = setup(5, 3, n, &g);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = LocalFunction::new(0, 2, "a", |w| (w[0] as f64).powi(2) - w[1] as f64);
        let h = LocalFunction::new(2, 3, "b", |w| w[0] as f64 * w[2] as f64 + w[1] as f64);
        let lf = expectation(&fss, &pi, |s| apply_generator(&f, s, n, &g) * h.evaluate(s));
        let fl = expectation(&fss, &pi, |s| f.evaluate(s) * apply_adjoint(&h, s, n, &g));
        assert!((lf - fl).abs() < 1e-10 * lf.abs().max(1.0));
        // Matrix form agrees with local application.
        let fv = fss.tabulate(|s| f.evaluate(s));
        let gf = gm.apply(&fv);
        for (i, s) in fss.states().iter().enumerate() {
            assert!((gf[i] - apply_generator(&f, s, n, &g)).abs() < 1e-10);
        }
        for _ in 0..50 {
            let v = centered(&pi, (0..fss.len()).map(|_| rng.random_range(-1.0..1.0)).collect());
            let sv: f64 = expectation(&fss, &pi, |s| {
                let i = fss.index_of(s).unwrap();
                v[i] * gm.apply(&v)[i]
            });
            let h1 = h1_norm_vec(&fss, &pi, n, &g, &v);
            assert!(sv <= 1e-12);
            assert!((h1 + sv).abs() < 1e-9 * h1.max(1.0));
        }
        let h1f = h1_norm(&f, &fss, &pi, n, &g);
        let sf = expectation(&fss, &pi, |s| f.evaluate(s) * symmetric_part(&f, s, n, &g));
        assert!((h1f + sf).abs() < 1e-9 * h1f);
        assert_eq!(h1_norm(&LocalFunction::constant(2.0), &fss, &pi, n, &g), 0.0);
    }

    #[test]
    fn ibp_and_change_of_variables() {
        let g = RateFunction::qtasep();
        let n = 4;
        let (fss, _, pi) = setup(4, 3, n, &g);
        let fs = [
            LocalFunction::constant(1.0),
            LocalFunction::occupation(1),
            LocalFunction::occupation(2),
            LocalFunction::neighbour_product(1),
            LocalFunction::site_rate(1, n, &g),
        ];
        for f in &fs {
            let r = ibp_check(f, 1, &fss, &pi, n, &g);
            assert!(r.gap.abs() < 1e-10, "{}: {r:?}", f.description());
            assert!(change_of_variables_gap(f, 1, &fss, &pi, n, &g) < 1e-10);
        }
        let r = ibp_check(&fs[0], 1, &fss, &pi, n, &g);
        assert!(r.rhs == 0.0 && r.lhs.abs() < 1e-12);
    }

    #[test]
    fn variational_formula() {
        let g = RateFunction::linear();
        let n = 2;
        let (fss, gm, pi) = setup(4, 3, n, &g);
        let big = centered(&pi, fss.tabulate(|s| (s[0] as f64).powi(2) - s[1] as f64));
        let (norm, u) = h_minus1_norm_vec(&gm, &pi, &big).unwrap();
        let inner = |a: &[f64], b: &[f64]| pi.iter().zip(a).zip(b).map(|((p, x), y)| p * x * y).sum::<f64>();
        let at_opt = 2.0 * inner(&big, &u) - h1_norm_vec(&fss, &pi, n, &g, &u);
        assert!((at_opt - norm).abs() < 1e-10 * norm);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let f: Vec<f64> = (0..fss.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h1 = h1_norm_vec(&fss, &pi, n, &g, &f);
            assert!(2.0 * inner(&big, &f) - h1 <= norm * (1.0 + 1e-12));
            assert!(inner(&big, &f).powi(2) <= norm * h1 * (1.0 + 1e-12) + 1e-15);
        }
        let raw = fss.tabulate(|s| s[0] as f64);
        assert!(matches!(h_minus1_norm_vec(&gm, &pi, &raw), Err(Error::NotCentered { .. })));
    }

    #[test]
    fn kipnis_varadhan_holds() {
        let g = RateFunction::qtasep();
        let (fss, gm, pi) = setup(4, 3, 1, &g);
        let f = centered(&pi, fss.tabulate(|s| s[0] as f64 * s[1] as f64));
        for t in [0.1, 1.0, 10.0] {
            let kv = kipnis_varadhan_check(&gm, &pi, &f, t).unwrap();
            assert!(kv.holds(), "{kv:?}");
        }
        // Short times: second moment ~ t^2 Var(F).
        let t = 1e-4;
        let kv = kipnis_varadhan_check(&gm, &pi, &f, t).unwrap();
        let var: f64 = pi.iter().zip(&f).map(|(p, x)| p * x * x).sum();
        assert!((kv.second_moment / (t * t) - var).abs() < 1e-2 * var);
        // Long times: second moment / t approaches the asymptotic rate.
        let kv = kipnis_varadhan_check(&gm, &pi, &f, 200.0).unwrap();
        assert!((kv.second_moment / 200.0 - kv.asymptotic_rate).abs() < 0.05 * kv.asymptotic_rate);
    }

    #[test]
    fn dense_cap_is_enforced() {
        let g = RateFunction::qtasep();
        let fss = FiniteStateSpace::new(8, 8).unwrap();
        assert_eq!(fss.len(), 6435);
        let gm = build_generator_matrix(&fss, 1, &g).unwrap();
        assert!(matches!(gm.to_dense(), Err(Error::StateSpaceTooLarge { .. })));
        let pi = canonical_measure(&fss, 1.0, 1, &g);
        assert!(stationarity_residual(&gm, &pi) < 1e-12);
    }
}
