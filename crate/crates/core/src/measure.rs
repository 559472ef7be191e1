//! One-site invariant marginals `nu_alpha(k) = alpha^k / (Z_n(alpha) g_n!(k))`,
//! the density-matching fugacity `Phi_n(rho)`, equilibrium sampling and the
//! q-geometric closed form for the q-TASEP rate.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::Configuration;
use crate::rates::{eval_gn, RateFunction};

/// Largest truncation searched before giving up on a fugacity.
const K_CAP: usize = 1_000_000;
/// Hard stop for slowly converging (but convergent) series.
const K_HARD_CAP: usize = 50_000_000;
const TAIL_TOL: f64 = 1e-12;

/// Truncated one-site marginal at fugacity `alpha`.
#[derive(Debug, Clone, Serialize)]
pub struct SiteMarginal {
    pub alpha: f64,
    pub n: u32,
    /// Truncation `K`: the table covers `k = 0..=K`.
    pub truncation: usize,
    pub log_pmf: Vec<f64>,
    pub log_z: f64,
    /// Bound on the neglected mass `sum_{k > K} pmf(k)`.
    pub tail_bound: f64,
    #[serde(skip)]
    g: RateFunction,
    #[serde(skip)]
    cdf: Vec<f64>,
}

/// Root of `E_alpha[eta] = rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FugacitySolution {
    pub rho: f64,
    pub phi: f64,
    pub residual: f64,
    pub alpha_star_estimate: f64,
    /// `|E[g_n(eta)] - phi|` at the root.
    pub rate_mean_gap: f64,
}

fn log_terms(alpha: f64, n: u32, g: &RateFunction) -> Result<(Vec<f64>, f64)> {
    let log_alpha = alpha.ln();
    let mut terms = vec![0.0f64];
    let mut running_max = 0.0f64;
    // sum of exp(t - running_max)
    let mut scaled_sum = 1.0f64;
    let mut k = 0usize;
    loop {
        let next_rate = eval_gn(k as u32 + 1, n, g);
        let ratio = alpha / next_rate;
        let last = *terms.last().unwrap();
        if ratio < 1.0 && k > 0 {
            let rel_term = (last - running_max).exp() / scaled_sum;
            // Ratios only decrease with k, so the tail is dominated by a
            // geometric series with the current ratio.
            let tail = rel_term * ratio / (1.0 - ratio);
            if rel_term < 1e-16 && tail < TAIL_TOL {
                return Ok((terms, tail));
            }
        }
        if k >= K_CAP && ratio >= 1.0 - 1e-6 {
            return Err(Error::FugacityAtRadius { alpha, cap: K_CAP });
        }
        if k >= K_HARD_CAP {
            return Err(Error::FugacityAtRadius { alpha, cap: K_HARD_CAP });
        }
        let t = last + log_alpha - next_rate.ln();
        if t > running_max {
            scaled_sum = scaled_sum * (running_max - t).exp() + 1.0;
            running_max = t;
        } else {
            scaled_sum += (t - running_max).exp();
        }
        terms.push(t);
        k += 1;
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `(log Z_n(alpha), K, tail bound)`.
pub fn partition_function(alpha: f64, n: u32, g: &RateFunction) -> Result<(f64, usize, f64)> {
    let (terms, tail) = log_terms(alpha, n, g)?;
    Ok((log_sum_exp(&terms), terms.len() - 1, tail))
}

impl SiteMarginal {
    pub fn new(alpha: f64, n: u32, g: &RateFunction) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("fugacity must be positive, got {alpha}")));
        }
        let (terms, tail) = log_terms(alpha, n, g)?;
        let log_z = log_sum_exp(&terms);
        let log_pmf: Vec<f64> = terms.iter().map(|t| t - log_z).collect();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = log_pmf
            .iter()
            .map(|lp| {
                acc += lp.exp();
                acc
            })
            .collect();
        let total = acc;
        for c in cdf.iter_mut() {
            *c /= total;
        }
        Ok(SiteMarginal {
            alpha,
            n,
            truncation: terms.len() - 1,
            log_pmf,
            log_z,
            tail_bound: tail,
            g: g.clone(),
            cdf,
        })
    }

    pub fn rate_function(&self) -> &RateFunction {
        &self.g
    }

    pub fn pmf(&self, k: usize) -> f64 {
        self.log_pmf.get(k).map_or(0.0, |lp| lp.exp())
    }

    /// `E[h(eta)]` by exact summation over the table.
    pub fn expect(&self, h: impl Fn(u32) -> f64) -> f64 {
        self.log_pmf.iter().enumerate().map(|(k, lp)| lp.exp() * h(k as u32)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|k| k as f64)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expect(|k| (k as f64 - m).powi(2))
    }

    /// `E[g_n(eta)]`, which equals `alpha` up to the truncated tail.
    pub fn rate_mean(&self) -> f64 {
        let (n, g) = (self.n, &self.g);
        self.expect(|k| eval_gn(k, n, g))
    }

    /// Exact `k`-th central moment of the occupation.
    pub fn central_moment(&self, p: i32) -> f64 {
        let m = self.mean();
        self.expect(|k| (k as f64 - m).powi(p))
    }

    /// Inverse-CDF draw from the (renormalised) truncated table.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let k = self.cdf.partition_point(|&c| c <= u);
        k.min(self.truncation) as u32
    }

    pub fn sample_occupancy<R: Rng + ?Sized>(&self, sites: usize, rng: &mut R) -> Vec<u32> {
        (0..sites).map(|_| self.sample(rng)).collect()
    }

    /// `k,pmf` table with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,pmf\n");
        for k in 0..=self.truncation {
            out.push_str(&format!("{},{}\n", k, self.pmf(k)));
        }
        out
    }
}

pub fn mean_occupation(alpha: f64, n: u32, g: &RateFunction) -> Result<f64> {
    Ok(SiteMarginal::new(alpha, n, g)?.mean())
}

/// `Var(g_n(eta) / g'(0))` under the marginal.
pub fn w_variance(sm: &SiteMarginal, g: &RateFunction) -> f64 {
    let n = sm.n;
    let d1 = g.d1_at_0;
    let mean = sm.expect(|k| eval_gn(k, n, g) / d1);
    sm.expect(|k| (eval_gn(k, n, g) / d1 - mean).powi(2))
}

/// Fugacity `Phi_n(rho)` with `E[eta] = rho`: bracketed bisection to a
/// relative width of 1e-3, then Newton steps using
/// `d E[eta] / d alpha = Var(eta) / alpha`.
pub fn solve_fugacity(rho: f64, n: u32, g: &RateFunction) -> Result<FugacitySolution> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("density must be positive, got {rho}")));
    }
    let alpha_star = g.radius(n);
    // Mean occupation, with a truncation failure near the radius read as
    // "larger than any reachable target".
    let above = |alpha: f64| -> Result<bool> {
        match mean_occupation(alpha, n, g) {
            Ok(m) => Ok(m >= rho),
            Err(Error::FugacityAtRadius { .. }) => Ok(true),
            Err(e) => Err(e),
        }
    };
    let mut lo = 0.0f64;
    let mut hi;
    if alpha_star.is_finite() {
        let mut m = 1;
        loop {
            let a = alpha_star * (1.0 - 0.5f64.powi(m));
            if above(a)? {
                hi = a;
                break;
            }
            lo = a;
            if m >= 30 {
                let sup = mean_occupation(a, n, g)?;
                return Err(Error::DensityUnreachable { rho, sup });
            }
            m += 1;
        }
    } else {
        hi = (2.0 * rho * g.d1_at_0).max(1.0);
        let mut doublings = 0;
        while !above(hi)? {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > 200 {
                let sup = mean_occupation(hi, n, g)?;
                return Err(Error::DensityUnreachable { rho, sup });
            }
        }
    }

    while hi - lo > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        if above(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let tol = 1e-13 * rho.max(1.0);
    let mut alpha = 0.5 * (lo + hi);
    let mut sm = SiteMarginal::new(alpha, n, g)?;
    for _ in 0..100 {
        let mean = sm.mean();
        let res = mean - rho;
        if res.abs() < tol {
            break;
        }
        if res < 0.0 {
            lo = lo.max(alpha);
        } else {
            hi = hi.min(alpha);
        }
        let slope = sm.variance() / alpha;
        let mut next = alpha - res / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == alpha {
            break;
        }
        alpha = next;
        sm = SiteMarginal::new(alpha, n, g)?;
    }
    let residual = sm.mean() - rho;
    let rate_mean_gap = (sm.rate_mean() - alpha).abs();
    debug_assert!(rate_mean_gap <= 1e-10 * alpha.max(1.0));
    Ok(FugacitySolution {
        rho,
        phi: alpha,
        residual,
        alpha_star_estimate: alpha_star,
        rate_mean_gap,
    })
}

/// Equilibrium configuration of `sites` i.i.d. sites drawn from `sm`.
pub fn sample_configuration<R: Rng + ?Sized>(
    sm: &SiteMarginal,
    sites: usize,
    rng: &mut R,
) -> Configuration {
    assert!(sites >= 2, "lattice needs at least two sites");
    Configuration::new(sm.sample_occupancy(sites, rng), sm.n, &sm.g)
}

/// `log (a; q)_inf` for `0 <= a < 1`, `0 <= q < 1`, truncated once the
/// remaining factors contribute less than 1e-14.
pub fn log_q_pochhammer_inf(a: f64, q: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&a) && (0.0..1.0).contains(&q));
    let mut sum = 0.0;
    let mut aq = a;
    loop {
        // |sum_{i >= k} log(1 - a q^i)| <= a q^k / ((1 - q)(1 - a q^k))
        if aq / ((1.0 - q) * (1.0 - aq)) < 1e-14 {
            return sum;
        }
        sum += (-aq).ln_1p();
        aq *= q;
    }
}

/// `log (q; q)_k` with `q = exp(-1/sqrt(n))`, computed as
/// `sum_{i=1..k} log(1 - exp(-i/sqrt(n)))`.
fn log_qq_finite(k: u32, n: u32) -> f64 {
    let s = (n as f64).sqrt();
    (1..=k).map(|i| (-(-(i as f64) / s).exp_m1()).ln()).sum()
}

/// q-geometric marginal `(a; q)_inf a^k / (q; q)_k` with `a = alpha / sqrt(n)`
/// and `q = exp(-1/sqrt(n))`.
pub fn q_geometric_pmf(alpha: f64, n: u32, k: u32) -> Result<f64> {
    let s = (n as f64).sqrt();
    let a = alpha / s;
    if !(a < 1.0) || !(alpha > 0.0) {
        return Err(Error::QParameterOutOfRange { ratio: a });
    }
    let q = (-1.0 / s).exp();
    let log_p = log_q_pochhammer_inf(a, q) + k as f64 * a.ln() - log_qq_finite(k, n);
    Ok(log_p.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

    #[test]
    fn partition_small_alpha() {
        let (lz, k, tail) = partition_function(1e-12, 4, &RateFunction::qtasep()).unwrap();
        assert!(lz.abs() < 1e-11);
        assert!(k >= 1);
        assert!(tail < 1e-12);
    }

    #[test]
    fn partition_linear_is_exponential() {
        for n in [1, 4, 100] {
            let (lz, _, tail) = partition_function(2.0, n, &RateFunction::linear()).unwrap();
            assert_relative_eq!(lz, 2.0, max_relative = 1e-13);
            assert!(tail < 1e-12);
        }
    }

    #[test]
    fn partition_qtasep_matches_q_binomial() {
        let n = 4;
        let alpha = 0.5;
        let (lz, _, _) = partition_function(alpha, n, &RateFunction::qtasep()).unwrap();
        let q = (-0.5f64).exp();
        let oracle = -log_q_pochhammer_inf(alpha / 2.0, q);
        assert!((lz - oracle).abs() < 1e-10, "{lz} vs {oracle}");
    }

    #[test]
    fn partition_at_radius_fails() {
        let g = RateFunction::qtasep();
        let radius = g.radius(4);
        let err = partition_function(radius, 4, &g).unwrap_err();
        assert!(matches!(err, Error::FugacityAtRadius { .. }));
    }

    #[test]
    fn marginal_invariants() {
        for g in [RateFunction::qtasep(), RateFunction::tanh(), RateFunction::linear()] {
            for (alpha, n) in [(0.3, 1), (0.9, 16), (1.5, 64)] {
                let sm = SiteMarginal::new(alpha, n, &g).unwrap();
                let total: f64 = (0..=sm.truncation).map(|k| sm.pmf(k)).sum();
                assert!(total <= 1.0 + 1e-14 && total >= 1.0 - sm.tail_bound - 1e-14);
                assert!(sm.tail_bound < 1e-12);
                for k in 0..=sm.truncation {
                    let direct = k as f64 * alpha.ln() - crate::rates::gn_log_factorial(k as u32, n, &g) - sm.log_z;
                    assert!((direct - sm.log_pmf[k]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn mean_occupation_examples() {
        let lin = RateFunction::linear_with_slope(2.0);
        assert!(mean_occupation(1e-12, 4, &lin).unwrap() < 1e-11);
        let rho = 0.7;
        let m = mean_occupation(rho * 2.0, 9, &lin).unwrap();
        assert_relative_eq!(m, rho, max_relative = 1e-13);
    }

    #[test]
    fn mean_occupation_is_increasing() {
        let g = RateFunction::qtasep();
        let mut prev = 0.0;
        for i in 1..200 {
            let m = mean_occupation(i as f64 * 0.0199, 16, &g).unwrap();
            assert!(m > prev);
            prev = m;
        }
    }

    #[test]
    fn mean_occupation_matches_sampling() {
        let sm = SiteMarginal::new(0.3, 16, &RateFunction::qtasep()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 10_000_000usize;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..m {
            let x = sm.sample(&mut rng) as f64;
            s += x;
            s2 += x * x;
        }
        let mean = s / m as f64;
        let se = ((s2 / m as f64 - mean * mean) / m as f64).sqrt();
        assert!((mean - sm.mean()).abs() < 4.0 * se, "{mean} vs {}", sm.mean());
    }

    #[test]
    fn fugacity_linear_closed_form() {
        let lin = RateFunction::linear_with_slope(1.5);
        let sol = solve_fugacity(0.7, 16, &lin).unwrap();
        assert_relative_eq!(sol.phi, 0.7 * 1.5, max_relative = 1e-12);
        assert!(sol.residual.abs() < 1e-12);
        assert!(sol.alpha_star_estimate.is_infinite());
    }

    #[test]
    fn fugacity_small_density() {
        let g = RateFunction::qtasep();
        let sol = solve_fugacity(1e-8, 16, &g).unwrap();
        assert!(sol.phi < 2e-8);
        assert!(sol.residual.abs() < 1e-12);
    }

    #[test]
    fn fugacity_qtasep_residual_and_convergence() {
        let g = RateFunction::qtasep();
        let mut prev = f64::INFINITY;
        for n in [16, 64, 256, 1024] {
            let sol = solve_fugacity(0.5, n, &g).unwrap();
            assert!(sol.residual.abs() < 1e-12, "n={n}: {}", sol.residual);
            assert!(sol.rate_mean_gap < 1e-10);
            assert!(sol.phi < sol.alpha_star_estimate);
            let dev = (sol.phi - 0.5).abs();
            assert!(dev < prev);
            prev = dev;
        }
    }

    #[test]
    fn fugacity_rejects_nonpositive_density() {
        assert!(solve_fugacity(0.0, 4, &RateFunction::qtasep()).is_err());
    }

    #[test]
    fn w_variance_examples() {
        let lin = RateFunction::linear_with_slope(2.0);
        let sm = SiteMarginal::new(1.2, 4, &lin).unwrap();
        assert_relative_eq!(w_variance(&sm, &lin), 1.2 / 2.0, max_relative = 1e-12);
        let sm0 = SiteMarginal::new(1e-14, 4, &lin).unwrap();
        assert!(w_variance(&sm0, &lin) < 1e-13);
    }

    #[test]
    fn w_variance_matches_sampling() {
        let g = RateFunction::qtasep();
        let sol = solve_fugacity(0.5, 16, &g).unwrap();
        let sm = SiteMarginal::new(sol.phi, 16, &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = 2_000_000usize;
        let ws: Vec<f64> = (0..m).map(|_| eval_gn(sm.sample(&mut rng), 16, &g)).collect();
        let mean = ws.iter().sum::<f64>() / m as f64;
        let dev: Vec<f64> = ws.iter().map(|w| (w - mean).powi(2)).collect();
        let var = dev.iter().sum::<f64>() / (m - 1) as f64;
        let m4 = ws.iter().map(|w| (w - mean).powi(4)).sum::<f64>() / m as f64;
        let se = ((m4 - var * var) / m as f64).sqrt();
        let exact = w_variance(&sm, &g);
        assert!((var - exact).abs() < 4.0 * se, "{var} vs {exact} (se {se})");
    }

    #[test]
    fn sampler_is_deterministic() {
        let sm = SiteMarginal::new(0.8, 16, &RateFunction::qtasep()).unwrap();
        let a = sm.sample_occupancy(500, &mut ChaCha8Rng::seed_from_u64(3));
        let b = sm.sample_occupancy(500, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn sampler_empty_limit() {
        let sm = SiteMarginal::new(1e-15, 16, &RateFunction::qtasep()).unwrap();
        let occ = sm.sample_occupancy(1000, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(occ.iter().all(|&k| k == 0));
    }

    #[test]
    fn sampler_poisson_goodness_of_fit() {
        let g = RateFunction::linear();
        let rho = 0.5;
        let sm = SiteMarginal::new(rho, 7, &g).unwrap();
        let sites = 100_000;
        let occ = sm.sample_occupancy(sites, &mut ChaCha8Rng::seed_from_u64(99));
        let mean = occ.iter().map(|&k| k as f64).sum::<f64>() / sites as f64;
        let se = (rho / sites as f64).sqrt();
        assert!((mean - rho).abs() < 4.0 * se);

        // Bins 0..=4 and a pooled tail.
        let pois = Poisson::new(rho).unwrap();
        let mut counts = [0usize; 6];
        for &k in &occ {
            counts[(k as usize).min(5)] += 1;
        }
        let mut probs: Vec<f64> = (0..5).map(|k| pois.pmf(k)).collect();
        probs.push(1.0 - probs.iter().sum::<f64>());
        let chi2: f64 = counts
            .iter()
            .zip(probs.iter())
            .map(|(&c, &p)| {
                let e = p * sites as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        let p_value = 1.0 - ChiSquared::new(5.0).unwrap().cdf(chi2);
        assert!(p_value > 1e-3, "chi2 = {chi2}, p = {p_value}");
    }

    #[test]
    fn q_geometric_examples() {
        let (alpha, n) = (0.4, 9);
        let s: f64 = 3.0;
        let q = (-1.0 / s).exp();
        let p0 = q_geometric_pmf(alpha, n, 0).unwrap();
        assert_relative_eq!(p0, log_q_pochhammer_inf(alpha / s, q).exp(), max_relative = 1e-15);
        let total: f64 = (0..200).map(|k| q_geometric_pmf(alpha, n, k).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-10);
        let sm = SiteMarginal::new(alpha, n, &RateFunction::qtasep()).unwrap();
        assert!((q_geometric_pmf(alpha, n, 3).unwrap() - sm.pmf(3)).abs() < 1e-10);
        assert!(matches!(q_geometric_pmf(3.0, 9, 1), Err(Error::QParameterOutOfRange { .. })));
    }

    #[test]
    fn q_geometric_agrees_pointwise_with_generic_marginal() {
        let g = RateFunction::qtasep();
        for (alpha, n) in [(0.2, 1), (0.9, 4), (2.5, 16), (5.0, 64)] {
            let sm = SiteMarginal::new(alpha, n, &g).unwrap();
            for k in 0..=sm.truncation {
                let qg = q_geometric_pmf(alpha, n, k as u32).unwrap();
                assert!((qg - sm.pmf(k)).abs() < 1e-10, "alpha={alpha} n={n} k={k}");
            }
        }
    }

    #[test]
    fn marginal_csv_header() {
        let sm = SiteMarginal::new(0.5, 4, &RateFunction::qtasep()).unwrap();
        let csv = sm.to_csv();
        assert!(csv.starts_with("k,pmf\n0,"));
        assert_eq!(csv.lines().count(), sm.truncation + 2);
        assert!(!csv.contains('\r'));
    }
}
