//! The named experiment suites. Each returns a [`SummaryReport`] whose gates
//! carry the tolerances they were checked against.

use rand::Rng;

use super::{
    fit_loglog, map_indexed, stream_rng, CombinedReport, EquilibriumSetup, ExperimentConfig, Moments, SuiteConfigs,
    SummaryReport, Table,
};
use crate::error::{Error, Result};
use crate::fields::{
    a_eps_increment, bg2_deviation, block_size, discrete_grad, field_at_offset, frame_value, martingale_path,
    support_sites, IntegrandKind, TestFunction, TrajectoryRecord,
};
use crate::generator::{
    build_generator_matrix, canonical_measure, change_of_variables_gap, expansion_identity_suite, expectation,
    ibp_check, ibp_check_monte_carlo, kipnis_varadhan_check, stationarity_residual, stationary_distribution,
    total_variation, w_value, FiniteStateSpace, LocalFunction,
};
use crate::lattice::{rate_identity_error, CoupledQtasep};
use crate::measure::{q_geometric_pmf, sample_configuration, solve_fugacity, SiteMarginal};
use crate::rates::RateFunction;

const IBP_SALT: u64 = 0x6962_70;
const IDENTITY_SALT: u64 = 0x6964_656e;
const QTASEP_SALT: u64 = 0x7174_6173;
const STATIC_SALT: u64 = 0x7374_6174;
const QV_SALT: u64 = 0x7176;
const BG2_SALT: u64 = 0x6267_32;
const EC_SALT: u64 = 0x6563;
const LEMMA_SALT: u64 = 0x6c65_6d6d;
const SIMULATE_SALT: u64 = 0x7369_6d75;

/// Small torus grid of the exact oracles.
const ORACLE_GRID: [(usize, u32); 3] = [(3, 2), (4, 3), (5, 3)];

fn oracle_rates() -> [RateFunction; 2] {
    [RateFunction::qtasep(), RateFunction::linear()]
}

fn ensemble(
    cfg: &ExperimentConfig,
    setup: &EquilibriumSetup,
    kinds: &[IntegrandKind],
    salt: u64,
    workers: Option<usize>,
) -> Result<Vec<TrajectoryRecord>> {
    let phi = cfg.test_function();
    map_indexed(cfg.trajectories, workers, |i| {
        let rec = setup.run_trajectory(&[phi], kinds, cfg.t_end, cfg.checkpoints, cfg.seed, salt, i)?;
        Ok(rec.into_iter().next().expect("one recorder"))
    })
}

/// `sum_j (Grad phi_j)^2` in the frame at `offset`.
fn grad_sq_sum(phi: &TestFunction, n: u32, offset: f64) -> f64 {
    let (lo, hi) = support_sites(phi, offset, n, 2);
    (lo..=hi).map(|j| discrete_grad(phi, j, offset, n).powi(2)).sum()
}

fn sup_sq(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).fold(0.0, f64::max)
}

/// Canonical stationarity on the small torus grid: the product weights solve
/// `pi^T G = 0` and agree with the null vector of `G`.
pub fn stationarity_oracle() -> Result<SummaryReport> {
    let mut report = SummaryReport::new("stationarity", None);
    let mut table = Table::new(&["sites", "particles", "rate", "n", "residual", "tv"]);
    let (mut worst_res, mut worst_tv) = (0.0f64, 0.0f64);
    for (sites, particles) in ORACLE_GRID {
        let fss = FiniteStateSpace::new(sites, particles)?;
        for (gi, g) in oracle_rates().iter().enumerate() {
            for n in [1u32, 4] {
                let gm = build_generator_matrix(&fss, n, g)?;
                let pi = canonical_measure(&fss, 0.5, n, g);
                let residual = stationarity_residual(&gm, &pi);
                let tv = total_variation(&pi, &stationary_distribution(&gm)?);
                worst_res = worst_res.max(residual);
                worst_tv = worst_tv.max(tv);
                table.push(vec![sites as f64, particles as f64, gi as f64, n as f64, residual, tv]);
            }
        }
    }
    report.tables.insert("grid".into(), table);
    report.gate_le("canonical_residual", worst_res, 1e-10, "max |pi^T G| over the grid");
    report.gate_le("null_space_tv", worst_tv, 1e-10, "total variation to the null vector of G");
    Ok(report)
}

/// Integration by parts, change of variables and Kipnis-Varadhan on the
/// exact grid, plus the sampled grand-canonical check for `f = eta_{j+1}`.
pub fn ibp_oracle(cfg: &ExperimentConfig) -> Result<SummaryReport> {
    let mut report = SummaryReport::new("integration_by_parts", Some(cfg));
    let (mut worst_ibp, mut worst_cov) = (0.0f64, 0.0f64);
    let mut kv_ok = true;
    for (sites, particles) in ORACLE_GRID {
        let fss = FiniteStateSpace::new(sites, particles)?;
        for g in oracle_rates() {
            for n in [1u32, 4] {
                let pi = canonical_measure(&fss, 0.5, n, &g);
                let fs = [
                    LocalFunction::constant(1.0),
                    LocalFunction::occupation(0),
                    LocalFunction::occupation(1),
                    LocalFunction::neighbour_product(0),
                    LocalFunction::site_rate(0, n, &g),
                ];
                for f in &fs {
                    worst_ibp = worst_ibp.max(ibp_check(f, 0, &fss, &pi, n, &g).gap.abs());
                    worst_cov = worst_cov.max(change_of_variables_gap(f, 0, &fss, &pi, n, &g));
                }
                let gm = build_generator_matrix(&fss, n, &g)?;
                let m = expectation(&fss, &pi, |s| s[0] as f64);
                let centered = fss.tabulate(|s| s[0] as f64 - m);
                kv_ok &= kipnis_varadhan_check(&gm, &pi, &centered, 0.5)?.holds();
            }
        }
    }
    report.gate_le("ibp_exact", worst_ibp, 1e-10, "max gap over the grid, f in {1, eta_j, eta_j+1, eta_j eta_j+1, g_n(eta_j)}");
    report.gate_le("change_of_variables", worst_cov, 1e-10, "max gap over the grid");
    report.gate_bool("kipnis_varadhan", kv_ok, "second moment of int F below 24 t ||F||_-1^2");

    let g = cfg.rate_function();
    let sol = solve_fugacity(cfg.rho, cfg.n, &g)?;
    let sm = SiteMarginal::new(sol.phi, cfg.n, &g)?;
    let mut rng = stream_rng(cfg.seed, IBP_SALT, 0);
    let sites = 5;
    let samples: Vec<Vec<u32>> = (0..cfg.samples).map(|_| sm.sample_occupancy(sites, &mut rng)).collect();
    let f = LocalFunction::occupation(1);
    let mc = ibp_check_monte_carlo(&f, 0, samples.iter().map(|s| s.as_slice()), cfg.n, &g);
    let (mut lhs, mut rhs) = (Moments::new(), Moments::new());
    for s in &samples {
        let wj = w_value(s[0], cfg.n, &g);
        lhs.push(s[1] as f64 * (wj - w_value(s[1], cfg.n, &g)));
        rhs.push(-wj);
    }
    let closed = -sol.phi / g.d1_at_0;
    report.value("closed_form", closed);
    report.estimate("mc_lhs", lhs.estimate());
    report.estimate("mc_rhs", rhs.estimate());
    let se = mc.standard_error.unwrap_or(f64::NAN);
    report.gate_le("mc_gap", mc.gap.abs(), 4.0 * se, "|E[f (W_j - W_j+1)] + E[grad f W_j]| within 4 SE");
    report.gate_le("mc_lhs_closed_form", (lhs.mean - closed).abs(), 4.0 * lhs.standard_error(), "within 4 SE of -Phi/g'(0)");
    report.gate_le("mc_rhs_closed_form", (rhs.mean - closed).abs(), 4.0 * rhs.standard_error(), "within 4 SE of -Phi/g'(0)");
    Ok(report)
}

/// Remainder-free generator identities and the Taylor residual bound over
/// random configurations with entries up to 20.
pub fn identity_oracle(cfg: &ExperimentConfig) -> Result<SummaryReport> {
    let mut report = SummaryReport::new("generator_identities", Some(cfg));
    let mut rng = stream_rng(cfg.seed, IDENTITY_SALT, 0);
    let (mut worst_gap, mut worst_ratio) = (0.0f64, 0.0f64);
    let mut taylor_ok = true;
    let mut cubic_plus = 0.0f64;
    let mut count = 0u64;
    for g in [RateFunction::qtasep(), RateFunction::tanh()] {
        for n in [16u32, 64, 256] {
            for _ in 0..1000 {
                let eta: Vec<u32> = (0..5).map(|_| rng.random_range(0..=20)).collect();
                let j = rng.random_range(0..eta.len());
                let r = expansion_identity_suite(&eta, n, &g, j);
                worst_gap = worst_gap.max(r.max_exact_gap());
                taylor_ok &= r.taylor_within_bound(1e-9);
                if r.taylor_bound > 0.0 {
                    worst_ratio = worst_ratio.max(r.taylor_residual_scaled / r.taylor_bound);
                }
                if let Some(gp) = r.gap("cubic_plus_five_halves") {
                    cubic_plus = cubic_plus.max(gp.abs());
                }
                count += 1;
            }
        }
    }
    report.value("configurations", count as f64);
    report.value("taylor_worst_ratio", worst_ratio);
    report.value("cubic_plus_five_halves_max_gap", cubic_plus);
    report.gate_le("identity_gap", worst_gap, 1e-9, "max |gap| of the exact identities");
    report.gate_bool("taylor_bound", taylor_ok, format!("residual / bound at most {worst_ratio:.6} (slack 1e-9)"));
    Ok(report)
}

/// All exact oracle suites.
pub fn oracle_suite(cfg: &ExperimentConfig) -> Result<Vec<SummaryReport>> {
    Ok(vec![stationarity_oracle()?, ibp_oracle(cfg)?, identity_oracle(cfg)?])
}

/// Fugacity solver accuracy, the linear closed form and the `n^{-1/2}`
/// approach of `Phi_n(rho)` to `g'(0) rho` over `n_grid`.
pub fn measure_suite(cfg: &ExperimentConfig) -> Result<SummaryReport> {
    cfg.validate(false)?;
    let mut report = SummaryReport::new("measure", Some(cfg));
    let mut worst_res = 0.0f64;
    let mut worst_linear = 0.0f64;
    for rho in [0.1, 0.5, 1.0, 2.0, 5.0] {
        for &n in &cfg.n_grid {
            for g in [RateFunction::qtasep(), RateFunction::tanh()] {
                worst_res = worst_res.max(solve_fugacity(rho, n, &g)?.residual.abs());
            }
            for slope in [1.0, 2.5] {
                let g = RateFunction::linear_with_slope(slope);
                let sol = solve_fugacity(rho, n, &g)?;
                worst_res = worst_res.max(sol.residual.abs());
                worst_linear = worst_linear.max((sol.phi - slope * rho).abs() / (slope * rho));
            }
        }
    }
    report.gate_le("fugacity_residual", worst_res, 1e-12, "max |E[eta] - rho|");
    report.gate_le("linear_closed_form", worst_linear, 1e-12, "relative |Phi - c rho| for g(x) = c x");

    let g = cfg.rate_function();
    let mut table = Table::new(&["n", "phi", "deviation"]);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &n in &cfg.n_grid {
        let phi = solve_fugacity(cfg.rho, n, &g)?.phi;
        let dev = (phi - g.d1_at_0 * cfg.rho).abs();
        table.push(vec![n as f64, phi, dev]);
        xs.push(n as f64);
        ys.push(dev);
    }
    let fit = fit_loglog(&xs, &ys);
    report.gate_within("fugacity_rate_slope", fit.slope, -0.5, 0.1);
    report.fits.insert("fugacity_deviation".into(), fit);
    report.tables.insert("fugacity".into(), table);
    Ok(report)
}

/// q-geometric marginals and the exact exclusion/zero-range coupling.
pub fn qtasep_coupling_test(cfg: &ExperimentConfig) -> Result<SummaryReport> {
    let mut report = SummaryReport::new("qtasep", Some(cfg));
    let g = RateFunction::qtasep();
    let sol = solve_fugacity(cfg.rho, cfg.n, &g)?;
    let sm = SiteMarginal::new(sol.phi, cfg.n, &g)?;
    let (mut total, mut worst) = (0.0, 0.0f64);
    for k in 0..4000u32 {
        let p = q_geometric_pmf(sol.phi, cfg.n, k)?;
        total += p;
        worst = worst.max((p - sm.pmf(k as usize)).abs());
    }
    report.gate_le("pmf_normalization", (total - 1.0).abs(), 1e-10, "sum of the q-geometric pmf");
    report.gate_le("pmf_matches_marginal", worst, 1e-10, "max |q-geometric - generic marginal|");

    let mut rng = stream_rng(cfg.seed, QTASEP_SALT, 0);
    let zr = sample_configuration(&sm, cfg.sites, &mut rng);
    let mut coupled = CoupledQtasep::new(zr)?;
    let mut done = 0u64;
    let mut failure = String::new();
    for _ in 0..cfg.events {
        match coupled.step(&mut rng) {
            Ok(_) => done += 1,
            Err(e) => {
                failure = e.to_string();
                break;
            }
        }
    }
    report.value("coupled_events", done as f64);
    report.gate_bool(
        "coupling_bijection",
        done == cfg.events,
        if failure.is_empty() { format!("{done} events in exact bijection") } else { failure },
    );
    let rate_err = [1u32, 4, 16, 64, 256].iter().map(|&n| rate_identity_error(n, 100)).fold(0.0, f64::max);
    report.gate_le("rate_identity", rate_err, 1e-12, "relative gap of sqrt(n)(1 - q^k) and g_n(k), k <= 100");
    Ok(report)
}

/// `Var(eta_0) (1/n) sum_j phi(j/n)^2`, the exact variance of `X_0(phi)`.
fn exact_static_variance(phi: &TestFunction, rho: f64, n: u32, g: &RateFunction) -> Result<(f64, SiteMarginal)> {
    let sol = solve_fugacity(rho, n, g)?;
    let sm = SiteMarginal::new(sol.phi, n, g)?;
    let (lo, hi) = support_sites(phi, 0.0, n, 1);
    let s2: f64 = (lo..=hi).map(|j| frame_value(phi, j, 0.0, n).powi(2)).sum();
    Ok((sm.variance() * s2 / n as f64, sm))
}

/// Sampled variance, skewness and kurtosis of `X_0(phi)` against the exact
/// finite-n values, and the approach of the exact variance to `rho ||phi||^2`.
pub fn static_variance_test(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<SummaryReport> {
    cfg.validate(false)?;
    if cfg.samples < 100 {
        return Err(Error::InvalidConfig(format!("samples = {} is below the minimum of 100", cfg.samples)));
    }
    let mut report = SummaryReport::new("static_variance", Some(cfg));
    let g = cfg.rate_function();
    let phi = cfg.test_function();
    let (exact, sm) = exact_static_variance(&phi, cfg.rho, cfg.n, &g)?;
    let xs = map_indexed(cfg.samples, workers, |i| {
        let mut rng = stream_rng(cfg.seed, STATIC_SALT, i);
        let c = sample_configuration(&sm, cfg.sites, &mut rng);
        Ok(field_at_offset(&c, 0.0, &phi, cfg.rho))
    })?;
    let m = Moments::from_slice(&xs);
    report.estimate("field", m.estimate());
    report.value("variance", m.variance());
    report.value("variance_se", m.variance_standard_error());
    report.value("exact_variance", exact);
    report.value("limit_variance", cfg.rho * phi.norm_sq);
    report.gate_le(
        "variance_vs_exact",
        (m.variance() - exact).abs(),
        4.0 * m.variance_standard_error(),
        "sample variance within 4 SE of the exact finite-n value",
    );

    let nf = cfg.n as f64;
    let (lo, hi) = support_sites(&phi, 0.0, cfg.n, 1);
    let power = |p: i32| (lo..=hi).map(|j| frame_value(&phi, j, 0.0, cfg.n).powi(p)).sum::<f64>();
    let mu2 = sm.variance();
    let k3 = sm.central_moment(3);
    let k4 = sm.central_moment(4) - 3.0 * mu2 * mu2;
    let skew = k3 * power(3) / nf.powf(1.5) / exact.powf(1.5);
    let kurt = k4 * power(4) / (nf * nf) / (exact * exact);
    let count = m.count as f64;
    report.value("exact_skewness", skew);
    report.value("exact_excess_kurtosis", kurt);
    report.gate_within("skewness", m.skewness(), skew, 4.0 * (6.0 / count).sqrt());
    report.gate_within("excess_kurtosis", m.excess_kurtosis(), kurt, 4.0 * (24.0 / count).sqrt());

    let mut table = Table::new(&["n", "exact_variance", "deviation"]);
    let mut devs = Vec::new();
    for &n in &cfg.n_grid {
        let (v, _) = exact_static_variance(&phi, cfg.rho, n, &g)?;
        let dev = (v - cfg.rho * phi.norm_sq).abs();
        table.push(vec![n as f64, v, dev]);
        devs.push(dev);
    }
    let monotone = devs.windows(2).all(|w| w[1] < w[0]);
    report.gate_bool("deviation_monotone", monotone, "|exact - rho ||phi||^2| decreasing over n_grid");
    report.tables.insert("limit".into(), table);

    let c = 3.0;
    let (scaled, _) = exact_static_variance(&phi.scaled(c), cfg.rho, cfg.n, &g)?;
    report.gate_le("scaling", (scaled / (c * c * exact) - 1.0).abs(), 1e-12, "phi -> c phi scales the exact variance by c^2");
    Ok(report)
}

/// Martingale, its quadratic variation and the approach of `<M>_T / T` to
/// `g'(0) rho ||phi'||^2`.
pub fn qv_convergence_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<SummaryReport> {
    cfg.validate(true)?;
    let setup = EquilibriumSetup::from_config(cfg)?;
    let g = cfg.rate_function();
    let phi = cfg.test_function();
    let kinds = [IntegrandKind::Drift, IntegrandKind::QuadraticVariation];
    let records = ensemble(cfg, &setup, &kinds, QV_SALT, workers)?;
    let (mut m, mut paired, mut qv_rate, mut events) = (Moments::new(), Moments::new(), Moments::new(), Moments::new());
    for rec in &records {
        let mt = *martingale_path(rec)?.last().expect("checkpoints");
        let qv = *rec.integral(IntegrandKind::QuadraticVariation)?.last().expect("checkpoints");
        m.push(mt);
        paired.push(mt * mt - qv);
        qv_rate.push(qv / cfg.t_end);
        events.push(rec.events as f64);
    }
    let mut report = SummaryReport::new("quadratic_variation", Some(cfg));
    report.estimate("martingale_t", m.estimate());
    report.estimate("martingale_sq_minus_qv", paired.estimate());
    report.estimate("qv_rate", qv_rate.estimate());
    report.estimate("events", events.estimate());
    report.gate_le("martingale_mean", m.mean.abs(), 4.0 * m.standard_error(), "mean M_T within 4 SE of 0");
    report.gate_le(
        "martingale_second_moment",
        paired.mean.abs(),
        4.0 * paired.standard_error(),
        "mean of M_T^2 - int qv within 4 SE of 0",
    );
    let limit = g.d1_at_0 * cfg.rho * phi.d1_norm_sq;
    let exact = |n: u32, phi_n: f64| phi_n * grad_sq_sum(&phi, n, 0.0) / n as f64;
    let moment = exact(cfg.n, setup.ctx.phi);
    let band = limit / (cfg.n as f64).sqrt();
    report.value("limit", limit);
    report.value("exact_moment", moment);
    report.value("bias_band", band);
    report.gate_le(
        "qv_rate_vs_limit",
        (qv_rate.mean - limit).abs(),
        4.0 * qv_rate.standard_error() + band,
        "<M>_T / T within 4 SE + n^{-1/2} g'(0) rho ||phi'||^2 of the limit",
    );
    report.gate_le(
        "qv_rate_vs_exact_moment",
        (qv_rate.mean - moment).abs(),
        4.0 * qv_rate.standard_error(),
        "<M>_T / T within 4 SE of Phi_n (1/n) sum (Grad phi)^2",
    );

    let mut table = Table::new(&["n", "exact_moment", "deviation"]);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &n in &cfg.n_grid {
        let e = exact(n, solve_fugacity(cfg.rho, n, &g)?.phi);
        let dev = (e - limit).abs();
        table.push(vec![n as f64, e, dev]);
        xs.push(n as f64);
        ys.push(dev);
    }
    let fit = fit_loglog(&xs, &ys);
    report.gate_within("exact_moment_rate_slope", fit.slope, -0.5, 0.2);
    report.fits.insert("exact_moment_deviation".into(), fit);
    report.tables.insert("n_scan".into(), table);
    Ok(report)
}

/// Ensemble `E sup_t |int modified - int Q(ell) Grad phi|^2` over `ell_grid`
/// against `C (ell / n^2 + T / ell^2) int sum (Grad phi)^2`, with the slopes
/// of the branches `ell <= n/4` and `ell >= n/2`.
pub fn bg2_scan(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<SummaryReport> {
    cfg.validate(true)?;
    if let Some(&ell) = cfg.ell_grid.iter().find(|&&l| l == 0 || 4 * l > cfg.sites) {
        return Err(Error::InvalidConfig(format!("ell_grid entry {ell} must lie in 1..=sites/4 = {}", cfg.sites / 4)));
    }
    let setup = EquilibriumSetup::from_config(cfg)?;
    let phi = cfg.test_function();
    let mut kinds = vec![IntegrandKind::Modified];
    kinds.extend(cfg.ell_grid.iter().map(|&l| IntegrandKind::Quadratic(l)));
    let records = ensemble(cfg, &setup, &kinds, BG2_SALT, workers)?;

    let k = cfg.ell_grid.len();
    let mut mse = vec![Moments::new(); k];
    let mut sup_b = Moments::new();
    for rec in &records {
        sup_b.push(sup_sq(rec.integral(IntegrandKind::Modified)?));
        for (acc, &ell) in mse.iter_mut().zip(&cfg.ell_grid) {
            acc.push(sup_sq(&bg2_deviation(rec, ell)?));
        }
    }
    // Time integral of sum_j (Grad phi)^2 along the moving frame.
    let steps = 64;
    let norm = (0..steps)
        .map(|i| grad_sq_sum(&phi, cfg.n, setup.ctx.offset(cfg.t_end * (i as f64 + 0.5) / steps as f64)))
        .sum::<f64>()
        * cfg.t_end
        / steps as f64;
    let n2 = (cfg.n as f64).powi(2);
    let shape: Vec<f64> =
        cfg.ell_grid.iter().map(|&l| (l as f64 / n2 + cfg.t_end / (l as f64).powi(2)) * norm).collect();
    let c = mse.iter().zip(&shape).map(|(m, b)| m.mean / b).fold(0.0, f64::max);

    let mut report = SummaryReport::new("bg2", Some(cfg));
    report.value("norm", norm);
    report.value("fitted_c", c);
    report.estimate("sup_modified_sq", sup_b.estimate());
    let mut table = Table::new(&["ell", "mse", "mse_se", "bound_shape", "ratio", "slack"]);
    let mut min_slack = f64::INFINITY;
    for ((m, b), &ell) in mse.iter().zip(&shape).zip(&cfg.ell_grid) {
        let slack = c * b - m.mean;
        min_slack = min_slack.min(slack);
        table.push(vec![ell as f64, m.mean, m.standard_error(), *b, m.mean / b, slack]);
        report.estimate(&format!("mse_l{ell}"), m.estimate());
    }
    report.tables.insert("mse".into(), table);
    report.gate_le("bound_slack", -min_slack, 0.0, "C (ell/n^2 + T/ell^2) norm - MSE >= 0 at every ell");

    let n = cfg.n as usize;
    let branch = |keep: &dyn Fn(usize) -> bool| -> (Vec<f64>, Vec<f64>) {
        cfg.ell_grid.iter().zip(&mse).filter(|(l, _)| keep(**l)).map(|(l, m)| (*l as f64, m.mean)).unzip()
    };
    for (name, target, (xs, ys)) in [
        ("small_ell", -2.0, branch(&|l| 4 * l <= n)),
        ("large_ell", 1.0, branch(&|l| 2 * l >= n)),
    ] {
        if xs.len() < 2 {
            report.gate_bool(&format!("{name}_slope"), false, "fewer than two block sizes on the branch");
            continue;
        }
        let fit = fit_loglog(&xs, &ys);
        report.gate_within(&format!("{name}_slope"), fit.slope, target, 0.3);
        report.fits.insert(name.into(), fit);
    }
    Ok(report)
}

/// `E|A^eps - A^delta|^2 / ((t - s) ||phi'||^2)` over the `(eps, delta)`
/// pairs with `delta < eps`, averaged over trajectories and the windows
/// between consecutive checkpoints, plus the EC1 statistic.
pub fn ec_scan(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<SummaryReport> {
    cfg.validate(true)?;
    let mut pairs = Vec::new();
    for &eps in &cfg.eps_grid {
        for &delta in &cfg.delta_grid {
            if delta < eps {
                pairs.push((eps, delta, block_size(eps, cfg.n)?, block_size(delta, cfg.n)?));
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("eps_grid and delta_grid give no pair with delta < eps".into()));
    }
    let setup = EquilibriumSetup::from_config(cfg)?;
    let phi = cfg.test_function();
    let mut ells: Vec<usize> = pairs.iter().flat_map(|p| [p.2, p.3]).collect();
    ells.sort_unstable();
    ells.dedup();
    let mut kinds = vec![IntegrandKind::Ec1];
    kinds.extend(ells.iter().map(|&l| IntegrandKind::Quadratic(l)));
    let records = ensemble(cfg, &setup, &kinds, EC_SALT, workers)?;

    let window = cfg.t_end / cfg.checkpoints as f64;
    let scale = window * phi.d1_norm_sq;
    let mut stats = vec![Moments::new(); pairs.len()];
    let mut ec1 = Moments::new();
    for rec in &records {
        let x = rec.integral(IntegrandKind::Ec1)?;
        for w in 0..cfg.checkpoints {
            ec1.push((x[w + 1] - x[w]).powi(2) / scale);
            for (acc, &(eps, delta, _, _)) in stats.iter_mut().zip(&pairs) {
                let d = a_eps_increment(rec, eps, &setup.ctx, w, w + 1)? - a_eps_increment(rec, delta, &setup.ctx, w, w + 1)?;
                acc.push(d * d / scale);
            }
        }
    }
    let mut report = SummaryReport::new("energy_estimate", Some(cfg));
    let mut table = Table::new(&["eps", "delta", "ratio", "ratio_se", "kappa"]);
    let kappas: Vec<f64> = stats.iter().zip(&pairs).map(|(m, p)| m.mean / p.0).collect();
    for ((m, p), kappa) in stats.iter().zip(&pairs).zip(&kappas) {
        table.push(vec![p.0, p.1, m.mean, m.standard_error(), *kappa]);
    }
    let kmax = kappas.iter().copied().fold(0.0, f64::max);
    let kmin = kappas.iter().copied().fold(f64::INFINITY, f64::min);
    report.tables.insert("ec2".into(), table);
    report.value("fitted_kappa", kmax);
    report.value("window", window);
    report.estimate("ec1_statistic", ec1.estimate());
    let worst = kappas.iter().map(|k| k / kmax).fold(0.0, f64::max);
    report.gate_le("ec2_bound", worst, 1.0, format!("ratio / (kappa eps) with kappa = {kmax:.6e}"));
    report.gate_le("kappa_stability", kmax / kmin, 2.0, "max / min of ratio / eps across the grid");
    Ok(report)
}

/// `E sup_t |int antisymmetric - int modified|^2` over `n_grid`, with the
/// torus scaled to keep `L / n` fixed. Report only.
pub fn lemma_scan(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<SummaryReport> {
    cfg.validate(false)?;
    let mut report = SummaryReport::new("antisymmetric_vs_modified", Some(cfg));
    let mut table = Table::new(&["n", "sites", "mean_sup_sq", "se"]);
    let kinds = [IntegrandKind::Antisymmetric, IntegrandKind::Modified];
    for &n in &cfg.n_grid {
        let c = ExperimentConfig { n, sites: cfg.sites / cfg.n as usize * n as usize, ..cfg.clone() };
        c.validate(false)?;
        let setup = EquilibriumSetup::from_config(&c)?;
        let records = ensemble(&c, &setup, &kinds, LEMMA_SALT, workers)?;
        let mut m = Moments::new();
        for rec in &records {
            let a = rec.integral(IntegrandKind::Antisymmetric)?;
            let b = rec.integral(IntegrandKind::Modified)?;
            let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            m.push(sup_sq(&d));
        }
        table.push(vec![n as f64, c.sites as f64, m.mean, m.standard_error()]);
    }
    report.tables.insert("n_scan".into(), table);
    Ok(report)
}

/// One trajectory with every integrand recorded, for series dumps.
pub fn simulate_single(cfg: &ExperimentConfig) -> Result<(SummaryReport, TrajectoryRecord)> {
    cfg.validate(false)?;
    let setup = EquilibriumSetup::from_config(cfg)?;
    let mut kinds = vec![
        IntegrandKind::Drift,
        IntegrandKind::QuadraticVariation,
        IntegrandKind::Symmetric,
        IntegrandKind::Antisymmetric,
        IntegrandKind::Modified,
        IntegrandKind::Ec1,
    ];
    kinds.extend(cfg.ell_grid.iter().map(|&l| IntegrandKind::Quadratic(l)));
    let rec = setup
        .run_trajectory(&[cfg.test_function()], &kinds, cfg.t_end, cfg.checkpoints, cfg.seed, SIMULATE_SALT, 0)?
        .remove(0);
    let mut report = SummaryReport::new("simulate", Some(cfg));
    report.value("events", rec.events as f64);
    report.value("field_0", rec.field[0]);
    report.value("field_t", *rec.field.last().expect("checkpoints"));
    report.value("martingale_t", *martingale_path(&rec)?.last().expect("checkpoints"));
    report.value("fugacity", setup.ctx.phi);
    report.value("frame_speed", setup.ctx.speed());
    report.value("sigma2", setup.ctx.sigma2);
    Ok((report, rec))
}

/// Every suite, in a fixed order.
pub fn run_all(configs: &SuiteConfigs, workers: Option<usize>) -> Result<CombinedReport> {
    let mut reports = oracle_suite(&configs.oracle)?;
    reports.push(measure_suite(&configs.measure)?);
    reports.push(qtasep_coupling_test(&configs.qtasep)?);
    reports.push(static_variance_test(&configs.static_var, workers)?);
    reports.push(qv_convergence_experiment(&configs.qv, workers)?);
    reports.push(bg2_scan(&configs.bg2, workers)?);
    reports.push(ec_scan(&configs.ec, workers)?);
    reports.push(lemma_scan(&configs.lemma, workers)?);
    Ok(CombinedReport::new(configs.qv.seed, reports))
}
