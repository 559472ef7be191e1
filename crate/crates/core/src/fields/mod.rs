//! Fluctuation field in the moving frame and the observables built on it:
//! discrete derivatives, `W` variables and block averages, the quadratic
//! statistic `Q`, the martingale decomposition and energy quantities.

mod recorder;
mod testfn;

use serde::Serialize;

pub use recorder::{
    a_eps_increment, bg2_deviation, martingale_path, IntegrandKind, RecorderSpec, TrajectoryRecord, TrajectoryRecorder,
};
pub use testfn::{Shape, TestFunction};

use crate::error::{Error, Result};
use crate::lattice::Configuration;
use crate::measure::{solve_fugacity, w_variance, SiteMarginal};
use crate::rates::{framing_coefficients, FramingCoefficients, RateFunction};

/// Equilibrium constants needed by every field observable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldContext {
    pub n: u32,
    pub rho: f64,
    /// Fugacity `Phi_n(rho)`.
    pub phi: f64,
    /// `Var(W_0)` under the invariant marginal.
    pub sigma2: f64,
    pub framing: FramingCoefficients,
    pub g: RateFunction,
}

impl FieldContext {
    pub fn new(g: &RateFunction, rho: f64, n: u32) -> Result<Self> {
        let sol = solve_fugacity(rho, n, g)?;
        let sm = SiteMarginal::new(sol.phi, n, g)?;
        Ok(FieldContext {
            n,
            rho,
            phi: sol.phi,
            sigma2: w_variance(&sm, g),
            framing: framing_coefficients(g, sol.phi, n),
            g: g.clone(),
        })
    }

    /// Frame speed `f_n` in sites per unit macroscopic time.
    pub fn speed(&self) -> f64 {
        self.framing.speed()
    }

    /// Frame displacement `f_n t` in sites.
    pub fn offset(&self, t: f64) -> f64 {
        self.speed() * t
    }
}

/// `phi((j - offset) / n)`.
#[inline]
pub fn frame_value(phi: &TestFunction, j: i64, offset: f64, n: u32) -> f64 {
    phi.value((j as f64 - offset) / n as f64)
}

/// `(n / 2) (phi_{j+1} - phi_{j-1})`.
pub fn discrete_grad(phi: &TestFunction, j: i64, offset: f64, n: u32) -> f64 {
    0.5 * n as f64 * (frame_value(phi, j + 1, offset, n) - frame_value(phi, j - 1, offset, n))
}

/// `n^2 (phi_{j+1} + phi_{j-1} - 2 phi_j)`.
pub fn discrete_lap(phi: &TestFunction, j: i64, offset: f64, n: u32) -> f64 {
    let nf = n as f64;
    nf * nf
        * (frame_value(phi, j + 1, offset, n) + frame_value(phi, j - 1, offset, n)
            - 2.0 * frame_value(phi, j, offset, n))
}

/// Unwrapped sites `lo..=hi` covering the support of `phi` in the frame at
/// `offset`, widened by `margin` on both sides.
pub fn support_sites(phi: &TestFunction, offset: f64, n: u32, margin: i64) -> (i64, i64) {
    let nf = n as f64;
    let c = phi.center();
    let r = phi.support_radius;
    let lo = (offset + (c - r) * nf).floor() as i64 - margin;
    let hi = (offset + (c + r) * nf).ceil() as i64 + margin;
    (lo, hi)
}

/// `X^n_t(phi) = n^{-1/2} sum_j (eta_j - rho) phi((j - f_n t) / n)`.
pub fn fluctuation_field(cfg: &Configuration, t: f64, phi: &TestFunction, ctx: &FieldContext) -> f64 {
    field_at_offset(cfg, ctx.offset(t), phi, ctx.rho)
}

/// Field for an explicit frame offset in sites.
pub fn field_at_offset(cfg: &Configuration, offset: f64, phi: &TestFunction, rho: f64) -> f64 {
    let n = cfg.n();
    let l = cfg.sites() as i64;
    let offset = offset.rem_euclid(l as f64);
    let (lo, hi) = support_sites(phi, offset, n, 1);
    assert!(hi - lo < l, "test function support does not fit on the torus");
    let occ = cfg.occupancy();
    let mut sum = 0.0;
    for j in lo..=hi {
        let v = frame_value(phi, j, offset, n);
        if v != 0.0 {
            sum += (occ[j.rem_euclid(l) as usize] as f64 - rho) * v;
        }
    }
    sum / (n as f64).sqrt()
}

/// `W` and centered `W` over a run of consecutive sites, with prefix sums
/// for block averages.
#[derive(Debug, Clone)]
pub struct WView {
    start: i64,
    w: Vec<f64>,
    w_bar: Vec<f64>,
    prefix: Vec<f64>,
    half_g2: f64,
}

impl WView {
    /// Sites `start, ..., start + len - 1` (unwrapped, read mod `L`).
    pub fn new(cfg: &Configuration, start: i64, len: usize, ctx: &FieldContext) -> Self {
        let l = cfg.sites() as i64;
        let d1 = ctx.g.d1_at_0;
        let centre = ctx.phi / d1;
        let w: Vec<f64> = (0..len as i64).map(|i| cfg.gn_at((start + i).rem_euclid(l) as usize) / d1).collect();
        let w_bar: Vec<f64> = w.iter().map(|x| x - centre).collect();
        let mut prefix = Vec::with_capacity(len + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for x in &w_bar {
            acc += x;
            prefix.push(acc);
        }
        WView { start, w, w_bar, prefix, half_g2: 0.5 * ctx.g.d2_at_0 }
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// `W` at window position `i`.
    #[inline]
    pub fn w(&self, i: usize) -> f64 {
        self.w[i]
    }

    #[inline]
    pub fn w_bar(&self, i: usize) -> f64 {
        self.w_bar[i]
    }

    /// `ell^{-1} sum_{k < ell} W_bar_{i + k}`.
    #[inline]
    pub fn block_average(&self, i: usize, ell: usize) -> f64 {
        (self.prefix[i + ell] - self.prefix[i]) / ell as f64
    }

    /// Largest gap between prefix-sum block averages and direct sums.
    pub fn audit(&self, ell: usize) -> f64 {
        (0..=self.len().saturating_sub(ell))
            .map(|i| {
                let direct: f64 = self.w_bar[i..i + ell].iter().sum::<f64>() / ell as f64;
                (direct - self.block_average(i, ell)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// `(g''(0) / 2) ((W_bar block average)^2 - sigma2 / ell)` at window
/// position `i`.
pub fn q_statistic(wv: &WView, ell: usize, i: usize, sigma2: f64) -> f64 {
    assert!(ell >= 1, "block size must be positive");
    let avg = wv.block_average(i, ell);
    wv.half_g2 * (avg * avg - sigma2 / ell as f64)
}

/// Block size `floor(eps n)`.
pub fn block_size(eps: f64, n: u32) -> Result<usize> {
    let ell = (eps * n as f64).floor();
    if !(ell >= 1.0) {
        return Err(Error::EpsilonTooSmall { eps, n });
    }
    Ok(ell as usize)
}

/// Pairing of the `W_bar` field against `iota_eps(x) = eps^{-1} 1[0, eps)(x)`
/// placed at window position `i`, summed site by site:
/// `n^{-1/2} sum_k W_bar_k iota_eps((k - i) / n)`.
pub fn iota_pairing(wv: &WView, i: usize, eps: f64, n: u32) -> f64 {
    let nf = n as f64;
    let mut sum = 0.0;
    for k in i..wv.len() {
        let x = (k - i) as f64 / nf;
        if x >= eps {
            break;
        }
        sum += wv.w_bar(k) / eps;
    }
    sum / nf.sqrt()
}

/// All time integrands at one frame offset, for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrandValues {
    /// `X(phi)`.
    pub field: f64,
    /// `L_n X = n^{3/2} sum_j g_n(eta_j) (phi_{j+1} - phi_j)`.
    pub generator: f64,
    /// `d/ds X = -(f_n / n) n^{-1/2} sum_j (eta_j - rho) phi'_j`.
    pub time_derivative: f64,
    /// `(1/n) sum_j g_n(eta_j) [n (phi_{j+1} - phi_j)]^2`.
    pub qv: f64,
    /// `(1 / 2 sqrt n) sum_j (g_n(eta_j) - Phi) Lap phi_j`.
    pub symmetric: f64,
    /// `n^{-1/2} sum_j [n g_n(eta_j) Grad phi_j - (f_n / n)(eta_j - rho) phi'_j]`.
    pub antisymmetric: f64,
    /// `(g''(0) / 2) sum_j W_bar_{j-1} W_bar_j Grad phi_j`.
    pub modified: f64,
    /// `X(phi'')`.
    pub ec1: f64,
    /// `sum_j Q(ell)_j Grad phi_j` for each requested `ell`.
    pub quadratic: Vec<f64>,
}

impl IntegrandValues {
    /// `(d/ds + L_n) X`.
    pub fn drift(&self) -> f64 {
        self.generator + self.time_derivative
    }
}

/// Evaluates every integrand at frame `offset` (in sites).
pub fn evaluate_integrands(
    cfg: &Configuration,
    offset: f64,
    phi: &TestFunction,
    ctx: &FieldContext,
    ells: &[usize],
) -> IntegrandValues {
    let offset = offset.rem_euclid(cfg.sites() as f64);
    let (lo, hi) = support_sites(phi, offset, cfg.n(), 2);
    FrozenIntegrands::new(cfg, lo, hi, ctx, ells).eval(offset, phi)
}

/// Per-site coefficients of every integrand for one fixed configuration,
/// over the unwrapped sites `lo..=hi`. Evaluating at a frame offset only
/// costs the test-function jets.
#[derive(Debug, Clone)]
pub struct FrozenIntegrands {
    lo: i64,
    hi: i64,
    n: u32,
    phi_n: f64,
    speed_over_n: f64,
    half_g2: f64,
    eta_bar: Vec<f64>,
    gn: Vec<f64>,
    pair: Vec<f64>,
    /// `Q(ell)` at each site, `ells.len()` values per site.
    quad: Vec<f64>,
    ells: usize,
}

impl FrozenIntegrands {
    pub fn new(cfg: &Configuration, lo: i64, hi: i64, ctx: &FieldContext, ells: &[usize]) -> Self {
        let l = cfg.sites() as i64;
        let ell_max = ells.iter().copied().max().unwrap_or(1);
        assert!(hi - lo + 2 + ell_max as i64 <= l, "test function support and blocks do not fit on the torus");
        let len = (hi - lo + 1) as usize;
        let wv = WView::new(cfg, lo - 1, len + 1 + ell_max, ctx);
        let occ = cfg.occupancy();
        let mut eta_bar = Vec::with_capacity(len);
        let mut gn = Vec::with_capacity(len);
        let mut pair = Vec::with_capacity(len);
        let mut quad = Vec::with_capacity(len * ells.len());
        for a in 1..=len {
            let j = lo + a as i64 - 1;
            eta_bar.push(occ[j.rem_euclid(l) as usize] as f64 - ctx.rho);
            gn.push(wv.w(a) * ctx.g.d1_at_0);
            pair.push(wv.w_bar(a - 1) * wv.w_bar(a));
            quad.extend(ells.iter().map(|&ell| q_statistic(&wv, ell, a, ctx.sigma2)));
        }
        FrozenIntegrands {
            lo,
            hi,
            n: cfg.n(),
            phi_n: ctx.phi,
            speed_over_n: ctx.speed() / cfg.n() as f64,
            half_g2: 0.5 * ctx.g.d2_at_0,
            eta_bar,
            gn,
            pair,
            quad,
            ells: ells.len(),
        }
    }

    /// Integrands at frame `offset`, given in the same unwrapped
    /// coordinates as `lo..=hi`.
    pub fn eval(&self, offset: f64, phi: &TestFunction) -> IntegrandValues {
        let nf = self.n as f64;
        let sn = nf.sqrt();
        let (lo, hi) = support_sites(phi, offset, self.n, 2);
        assert!(lo >= self.lo && hi <= self.hi, "frame offset outside the frozen window");
        let mut v = IntegrandValues {
            field: 0.0,
            generator: 0.0,
            time_derivative: 0.0,
            qv: 0.0,
            symmetric: 0.0,
            antisymmetric: 0.0,
            modified: 0.0,
            ec1: 0.0,
            quadratic: vec![0.0; self.ells],
        };
        let jet = |j: i64| phi.jet((j as f64 - offset) / nf);
        let (mut prev, mut cur) = (jet(lo - 1), jet(lo));
        for j in lo..=hi {
            let next = jet(j + 1);
            let (pm, p0, pp) = (prev[0], cur[0], next[0]);
            let (d1, d2) = (cur[1], cur[2]);
            prev = cur;
            cur = next;
            if p0 == 0.0 && pp == 0.0 && pm == 0.0 && d1 == 0.0 {
                continue;
            }
            let a = (j - self.lo) as usize;
            let grad = 0.5 * nf * (pp - pm);
            let lap = nf * nf * (pp + pm - 2.0 * p0);
            let fwd = pp - p0;
            let eta = self.eta_bar[a];
            let gn = self.gn[a];
            v.field += eta * p0;
            v.generator += gn * fwd;
            v.time_derivative += eta * d1;
            v.qv += gn * (nf * fwd).powi(2);
            v.symmetric += (gn - self.phi_n) * lap;
            v.antisymmetric += nf * gn * grad - self.speed_over_n * eta * d1;
            v.modified += self.pair[a] * grad;
            v.ec1 += eta * d2;
            for (slot, q) in v.quadratic.iter_mut().zip(&self.quad[a * self.ells..(a + 1) * self.ells]) {
                *slot += q * grad;
            }
        }
        v.field /= sn;
        v.generator *= nf * sn;
        v.time_derivative *= -self.speed_over_n / sn;
        v.qv /= nf;
        v.symmetric /= 2.0 * sn;
        v.antisymmetric /= sn;
        v.modified *= self.half_g2;
        v.ec1 /= sn;
        v
    }
}

/// Quadratic-variation density at time `t`.
pub fn qv_increment(cfg: &Configuration, phi: &TestFunction, t: f64, ctx: &FieldContext) -> f64 {
    evaluate_integrands(cfg, ctx.offset(t), phi, ctx, &[]).qv
}

pub fn symmetric_integrand(cfg: &Configuration, phi: &TestFunction, t: f64, ctx: &FieldContext) -> f64 {
    evaluate_integrands(cfg, ctx.offset(t), phi, ctx, &[]).symmetric
}

pub fn antisymmetric_integrand(cfg: &Configuration, phi: &TestFunction, t: f64, ctx: &FieldContext) -> f64 {
    evaluate_integrands(cfg, ctx.offset(t), phi, ctx, &[]).antisymmetric
}

pub fn modified_b_integrand(cfg: &Configuration, phi: &TestFunction, t: f64, ctx: &FieldContext) -> f64 {
    evaluate_integrands(cfg, ctx.offset(t), phi, ctx, &[]).modified
}

/// Torus sums of the discrete gradient and Laplacian.
pub fn telescoping_sums(phi: &TestFunction, offset: f64, n: u32, sites: usize) -> (f64, f64) {
    let l = sites as i64;
    let offset = offset.rem_euclid(l as f64);
    let lo = offset.floor() as i64 - l / 2;
    (lo..lo + l).fold((0.0, 0.0), |(g, d), j| (g + discrete_grad(phi, j, offset, n), d + discrete_lap(phi, j, offset, n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::sample_configuration;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ctx(n: u32) -> FieldContext {
        FieldContext::new(&RateFunction::qtasep(), 0.5, n).unwrap()
    }

    fn equilibrium(ctx: &FieldContext, sites: usize, rng: &mut impl Rng) -> Configuration {
        let sm = SiteMarginal::new(ctx.phi, ctx.n, &ctx.g).unwrap();
        sample_configuration(&sm, sites, rng)
    }

    #[test]
    fn constant_density_gives_zero_field() {
        let mut c = ctx(16);
        c.rho = 1.0;
        let cfg = Configuration::new(vec![1; 256], 16, &c.g);
        assert_eq!(fluctuation_field(&cfg, 0.013, &TestFunction::default(), &c), 0.0);
    }

    #[test]
    fn frame_covariance() {
        let c = ctx(16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = equilibrium(&c, 512, &mut rng);
        let phi = TestFunction::default();
        for t in [0.0, 0.003, 0.05, 0.31] {
            let moving = fluctuation_field(&cfg, t, &phi, &c);
            let shifted = fluctuation_field(&cfg, 0.0, &phi.shifted(c.offset(t) / 16.0), &c);
            assert!((moving - shifted).abs() < 1e-12, "{moving} {shifted}");
        }
    }

    #[test]
    fn discrete_derivatives() {
        // A wide Gaussian is nearly linear far below its peak.
        let phi = TestFunction::gaussian(1.0, 0.5);
        let n = 64;
        let x = 0.5;
        let j = (x * n as f64) as i64;
        let g = discrete_grad(&phi, j, 0.0, n);
        let exact_slope = phi.d1(j as f64 / n as f64);
        assert!((g - exact_slope).abs() < 1e-3 * exact_slope.abs());
        let mut prev = f64::INFINITY;
        for n in [8u32, 16, 32, 64, 128, 256] {
            let mut worst: f64 = 0.0;
            for j in -(n as i64)..(n as i64) {
                let xj = j as f64 / n as f64;
                worst = worst.max((discrete_grad(&phi, j, 0.0, n) - phi.d1(xj)).abs());
            }
            let sup3 = 3.0 * 1.0 / 0.5f64.powi(3);
            assert!(worst <= sup3 / (6.0 * (n as f64).powi(2)));
            assert!(worst < prev);
            prev = worst;
        }
        for offset in [0.0, 3.7, 100.25] {
            let (g, d) = telescoping_sums(&TestFunction::default(), offset, 32, 256);
            assert!(g.abs() < 1e-10 && d.abs() < 1e-10);
        }
    }

    #[test]
    fn wview_and_q_statistic() {
        let c = ctx(16);
        let empty = Configuration::new(vec![0; 64], 16, &c.g);
        let wv = WView::new(&empty, 0, 64, &c);
        let centre = -c.phi / c.g.d1_at_0;
        assert_eq!(wv.w_bar(5), centre);
        let q = q_statistic(&wv, 8, 3, 0.0);
        assert!((q - 0.5 * c.g.d2_at_0 * centre * centre).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = equilibrium(&c, 300, &mut rng);
        let wv = WView::new(&cfg, -20, 280, &c);
        for i in 0..wv.len() {
            assert_eq!(wv.w(i) == 0.0, cfg.occupancy()[((i as i64 - 20).rem_euclid(300)) as usize] == 0);
        }
        for ell in [1, 3, 16, 64] {
            assert!(wv.audit(ell) < 1e-12);
        }
    }

    #[test]
    fn q_statistic_is_centered() {
        let c = ctx(16);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sm = SiteMarginal::new(c.phi, 16, &c.g).unwrap();
        for ell in [2usize, 8] {
            let m = 40_000;
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..m {
                let cfg = Configuration::new(sm.sample_occupancy(ell, &mut rng), 16, &c.g);
                let wv = WView::new(&cfg, 0, ell, &c);
                let q = q_statistic(&wv, ell, 0, c.sigma2);
                s += q;
                s2 += q * q;
            }
            let mean = s / m as f64;
            let se = ((s2 / m as f64 - mean * mean) / m as f64).sqrt();
            assert!(mean.abs() < 4.0 * se, "ell {ell}: {mean} +- {se}");
        }
    }

    #[test]
    fn block_average_matches_iota_pairing() {
        let c = ctx(32);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = equilibrium(&c, 256, &mut rng);
        let wv = WView::new(&cfg, 0, 256, &c);
        for ell in [1usize, 4, 8, 16] {
            let eps = ell as f64 / 32.0;
            assert_eq!(block_size(eps, 32).unwrap(), ell);
            for i in [0usize, 17, 100] {
                let direct = iota_pairing(&wv, i, eps, 32);
                let block = (32f64).sqrt() * wv.block_average(i, ell);
                assert!((direct - block).abs() < 1e-12);
            }
        }
        assert_eq!(block_size(0.01, 32), Err(Error::EpsilonTooSmall { eps: 0.01, n: 32 }));
    }

    #[test]
    fn decomposition_pieces_add_up() {
        let c = ctx(32);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let phi = TestFunction::default();
        for _ in 0..20 {
            let cfg = equilibrium(&c, 512, &mut rng);
            let o = rng.random_range(0.0..512.0);
            let v = evaluate_integrands(&cfg, o, &phi, &c, &[4, 8]);
            let scale = v.generator.abs().max(v.time_derivative.abs()).max(1.0);
            assert!((v.symmetric + v.antisymmetric - v.drift()).abs() < 1e-10 * scale);
        }
        let empty = Configuration::new(vec![0; 512], 32, &c.g);
        let v = evaluate_integrands(&empty, 7.3, &phi, &c, &[4]);
        assert_eq!(v.qv, 0.0);
        assert!(v.symmetric.abs() < 1e-9);
        assert!(v.modified.abs() < 1e-9);
    }

    #[test]
    fn qv_mean_matches_measure_moment() {
        let c = ctx(16);
        let phi = TestFunction::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = 4000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..m {
            let cfg = equilibrium(&c, 128, &mut rng);
            let q = qv_increment(&cfg, &phi, 0.0, &c);
            s += q;
            s2 += q * q;
        }
        let mean = s / m as f64;
        let se = ((s2 / m as f64 - mean * mean) / m as f64).sqrt();
        let n = 16.0;
        let exact: f64 = c.phi / n
            * (-40i64..40)
                .map(|j| (n * (frame_value(&phi, j + 1, 0.0, 16) - frame_value(&phi, j, 0.0, 16))).powi(2))
                .sum::<f64>();
        assert!((mean - exact).abs() < 4.0 * se, "{mean} vs {exact} +- {se}");
    }
}
