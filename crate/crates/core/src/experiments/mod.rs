//! Ensemble orchestration, random streams, estimators and the experiment
//! suites.
//!
//! Every trajectory draws from its own ChaCha8 stream keyed by the base seed,
//! a per-suite salt and the trajectory index, and results are reduced in
//! index order, so reports do not depend on the number of workers.

mod config;
mod report;
pub mod stats;
mod suites;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{ConfigOverrides, ExperimentConfig, SuiteConfigs, CONFIG_KEYS};
pub use report::{CombinedReport, Gate, SummaryReport, Table};
pub use stats::{fit_line, fit_loglog, Estimate, LineFit, Moments};
pub use suites::*;

use crate::error::Result;
use crate::fields::{martingale_path, FieldContext, IntegrandKind, RecorderSpec, TestFunction, TrajectoryRecord, TrajectoryRecorder};
use crate::lattice::{Configuration, Observer};
use crate::measure::{sample_configuration, SiteMarginal};
use crate::rates::RateFunction;

/// Independent generator for `(seed, salt, index)`.
pub fn stream_rng(seed: u64, salt: u64, index: u64) -> ChaCha8Rng {
    let key = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Evaluates `f(0..count)` and returns the results in index order.
///
/// With the `parallel` feature the work is spread over `workers` threads
/// (all available cores when `None`); `Some(1)` always runs inline.
pub fn map_indexed<T, F>(count: u64, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if workers != Some(1) {
            use rayon::prelude::*;
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(w) = workers {
                builder = builder.num_threads(w);
            }
            let pool = builder.build().map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
            return pool.install(|| (0..count).into_par_iter().map(&f).collect());
        }
    }
    let _ = workers;
    (0..count).map(f).collect()
}

/// Static ingredients of an equilibrium run shared by all trajectories.
#[derive(Debug, Clone)]
pub struct EquilibriumSetup {
    pub ctx: Arc<FieldContext>,
    pub marginal: SiteMarginal,
    pub sites: usize,
    pub g: RateFunction,
}

impl EquilibriumSetup {
    pub fn new(g: &RateFunction, rho: f64, n: u32, sites: usize) -> Result<Self> {
        let ctx = Arc::new(FieldContext::new(g, rho, n)?);
        let marginal = SiteMarginal::new(ctx.phi, n, g)?;
        Ok(EquilibriumSetup { ctx, marginal, sites, g: g.clone() })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Self::new(&cfg.rate_function(), cfg.rho, cfg.n, cfg.sites)
    }

    /// Equilibrium-initialized trajectory on `[0, t_end]` with one recorder
    /// per test function.
    pub fn run_trajectory(
        &self,
        tests: &[TestFunction],
        integrands: &[IntegrandKind],
        t_end: f64,
        checkpoints: usize,
        seed: u64,
        salt: u64,
        index: u64,
    ) -> Result<Vec<TrajectoryRecord>> {
        let mut rng = stream_rng(seed, salt, index);
        let mut cfg: Configuration = sample_configuration(&self.marginal, self.sites, &mut rng);
        let mut recorders: Vec<TrajectoryRecorder> = tests
            .iter()
            .map(|phi| {
                TrajectoryRecorder::new(
                    RecorderSpec::uniform(*phi, integrands.to_vec(), t_end, checkpoints),
                    Arc::clone(&self.ctx),
                )
            })
            .collect();
        {
            let mut obs: Vec<&mut dyn Observer> = recorders.iter_mut().map(|r| r as &mut dyn Observer).collect();
            cfg.run_until(t_end, &mut rng, &mut obs)?;
        }
        Ok(recorders.into_iter().map(|r| r.finish(seed, index)).collect())
    }
}

/// Salt of the plain ensemble stream.
pub const ENSEMBLE_SALT: u64 = 0x656e_7365;

/// Runs `trajectories` equilibrium trajectories and summarizes the endpoint
/// observables of the first test function.
pub fn run_ensemble(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<SummaryReport> {
    cfg.validate(false)?;
    let setup = EquilibriumSetup::from_config(cfg)?;
    let phi = cfg.test_function();
    let kinds = [IntegrandKind::Drift, IntegrandKind::QuadraticVariation];
    let records = map_indexed(cfg.trajectories, workers, |i| {
        let rec = setup.run_trajectory(&[phi], &kinds, cfg.t_end, cfg.checkpoints, cfg.seed, ENSEMBLE_SALT, i)?;
        Ok(rec.into_iter().next().expect("one recorder"))
    })?;
    let mut moments: [Moments; 6] = Default::default();
    for rec in &records {
        let m = *martingale_path(rec)?.last().expect("checkpoints");
        let qv = *rec.integral(IntegrandKind::QuadraticVariation)?.last().expect("checkpoints");
        let vals = [rec.field[0], *rec.field.last().expect("checkpoints"), m, m * m, qv, rec.events as f64];
        for (acc, v) in moments.iter_mut().zip(vals) {
            acc.push(v);
        }
    }
    let mut report = SummaryReport::new("ensemble", Some(cfg));
    for (name, m) in ["field_0", "field_t", "martingale_t", "martingale_sq_t", "qv_integral_t", "events"].iter().zip(&moments) {
        report.estimate(name, m.estimate());
    }
    Ok(report)
}
