use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Shape, TestFunction};
use crate::measure::mean_occupation;
use crate::rates::{RateFunction, RateKind};

/// Parameters of one experiment suite. Times are macroscopic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub rate: RateKind,
    pub n: u32,
    pub rho: f64,
    /// Torus size `L` in lattice sites.
    pub sites: usize,
    /// Horizon `T` in macroscopic time units.
    pub t_end: f64,
    pub trajectories: u64,
    pub seed: u64,
    pub checkpoints: usize,
    pub ell_grid: Vec<usize>,
    pub eps_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub n_grid: Vec<u32>,
    pub test_functions: Vec<Shape>,
    /// Independent equilibrium draws for static estimators.
    pub samples: u64,
    /// Event budget for the coupled q-TASEP run.
    pub events: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let n = 32;
        ExperimentConfig {
            rate: RateKind::QTasep,
            n,
            rho: 0.5,
            sites: 32 * n as usize,
            t_end: 0.02,
            trajectories: 200,
            seed: 7,
            checkpoints: 100,
            ell_grid: vec![4, 8, 16, 32, 64],
            eps_grid: vec![0.5, 0.25],
            delta_grid: vec![0.125, 0.0625],
            n_grid: vec![8, 16, 32, 64],
            test_functions: vec![Shape::default()],
            samples: 10_000,
            events: 10_000,
        }
    }
}

impl ExperimentConfig {
    /// Exact oracle suites: only `seed` and `samples` (grand-canonical
    /// draws for the sampled integration by parts) are used.
    pub fn oracle() -> Self {
        ExperimentConfig { n: 4, samples: 200_000, ..Default::default() }
    }

    /// Fugacity scaling over `n_grid`.
    pub fn measure() -> Self {
        ExperimentConfig { n_grid: (4..=12).map(|k| 1u32 << k).collect(), ..Default::default() }
    }

    /// Coupled q-TASEP run on a torus of 50 sites.
    pub fn qtasep() -> Self {
        ExperimentConfig { n: 16, rho: 1.0, sites: 50, test_functions: vec![Shape::Bump { amplitude: 1.0, radius: 0.25, center: 0.0 }], ..Default::default() }
    }

    /// Static field variance: `samples` independent equilibrium draws.
    pub fn static_var() -> Self {
        ExperimentConfig::default()
    }

    /// Martingale and quadratic variation.
    pub fn qv() -> Self {
        ExperimentConfig::default()
    }

    /// Second-order Boltzmann-Gibbs scan. A long horizon keeps the
    /// one-block term visible; see the README for the branch split.
    pub fn bg2() -> Self {
        ExperimentConfig {
            n: 16,
            sites: 128,
            t_end: 25.0,
            ell_grid: vec![2, 4, 8, 16, 32],
            ..Default::default()
        }
    }

    /// Energy-estimate scan at the density where `Var(W_0)` is stationary in
    /// `rho` (for q-TASEP, `Phi_n(rho) = sqrt(n) / 2`), so the density
    /// projection of `sigma^2 / ell` vanishes. Checkpoints delimit the
    /// windows `[s, t]`.
    pub fn ec() -> Self {
        let n = 16;
        let g = RateFunction::qtasep();
        let rho = mean_occupation((n as f64).sqrt() / 2.0, n, &g).expect("fugacity below the radius");
        ExperimentConfig {
            n,
            rho,
            sites: 128,
            t_end: 8.0,
            checkpoints: 2,
            eps_grid: vec![0.125, 0.25, 0.5],
            delta_grid: vec![0.0625],
            ..Default::default()
        }
    }

    /// Finite-n scan of `E sup |B - B~|^2`.
    pub fn lemma() -> Self {
        ExperimentConfig { trajectories: 50, sites: 512, ..Default::default() }
    }

    pub fn rate_function(&self) -> RateFunction {
        RateFunction::from_kind(self.rate)
    }

    pub fn test_function(&self) -> TestFunction {
        TestFunction::new(self.test_functions[0])
    }

    pub fn test_function_set(&self) -> Vec<TestFunction> {
        self.test_functions.iter().map(|s| TestFunction::new(*s)).collect()
    }

    /// Checks structural constraints; `statistical` suites also need at
    /// least 100 trajectories.
    pub fn validate(&self, statistical: bool) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if self.test_functions.is_empty() {
            return bad("test_functions must not be empty".into());
        }
        for (name, empty) in [
            ("ell_grid", self.ell_grid.is_empty()),
            ("eps_grid", self.eps_grid.is_empty()),
            ("delta_grid", self.delta_grid.is_empty()),
            ("n_grid", self.n_grid.is_empty()),
        ] {
            if empty {
                return bad(format!("{name} must not be empty"));
            }
        }
        if self.checkpoints == 0 {
            return bad("checkpoints must be positive".into());
        }
        let radius = self.test_function_set().iter().map(|t| t.support_radius).fold(0.0, f64::max);
        let need = (8.0 * self.n as f64 * radius).ceil() as usize;
        if self.sites < need {
            return bad(format!("sites = {} is below 8 * n * support radius = {need}", self.sites));
        }
        if statistical && self.trajectories < 100 {
            return bad(format!("trajectories = {} is below the minimum of 100", self.trajectories));
        }
        if self.trajectories == 0 {
            return bad("trajectories must be positive".into());
        }
        Ok(())
    }
}

/// Optional per-field overrides, as read from one config section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub rate: Option<RateKind>,
    pub n: Option<u32>,
    pub rho: Option<f64>,
    pub sites: Option<usize>,
    pub t_end: Option<f64>,
    pub trajectories: Option<u64>,
    pub seed: Option<u64>,
    pub checkpoints: Option<usize>,
    pub ell_grid: Option<Vec<usize>>,
    pub eps_grid: Option<Vec<f64>>,
    pub delta_grid: Option<Vec<f64>>,
    pub n_grid: Option<Vec<u32>>,
    pub test_functions: Option<Vec<Shape>>,
    pub samples: Option<u64>,
    pub events: Option<u64>,
}

impl ConfigOverrides {
    /// Overlays the set fields on `base`. Changing `n` without `sites`
    /// rescales the torus to keep `L / n` fixed.
    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut c = base.clone();
        if let Some(n) = self.n {
            if self.sites.is_none() {
                c.sites = base.sites / base.n as usize * n as usize;
            }
            c.n = n;
        }
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { c.$f = v.clone(); } )* };
        }
        set!(rate, rho, sites, t_end, trajectories, seed, checkpoints, ell_grid, eps_grid, delta_grid, n_grid, test_functions, samples, events);
        c
    }
}

/// Configurations of every suite run by [`crate::experiments::run_all`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfigs {
    pub oracle: ExperimentConfig,
    pub measure: ExperimentConfig,
    pub qtasep: ExperimentConfig,
    pub static_var: ExperimentConfig,
    pub qv: ExperimentConfig,
    pub bg2: ExperimentConfig,
    pub ec: ExperimentConfig,
    pub lemma: ExperimentConfig,
}

impl Default for SuiteConfigs {
    fn default() -> Self {
        SuiteConfigs {
            oracle: ExperimentConfig::oracle(),
            measure: ExperimentConfig::measure(),
            qtasep: ExperimentConfig::qtasep(),
            static_var: ExperimentConfig::static_var(),
            qv: ExperimentConfig::qv(),
            bg2: ExperimentConfig::bg2(),
            ec: ExperimentConfig::ec(),
            lemma: ExperimentConfig::lemma(),
        }
    }
}

impl SuiteConfigs {
    /// Small horizons and ensembles for smoke and determinism runs. The
    /// statistical gates are not expected to be meaningful at this size.
    pub fn reduced() -> Self {
        let small = |c: ExperimentConfig, n: u32, t_end: f64| ExperimentConfig {
            sites: c.sites / c.n as usize * n as usize,
            n,
            t_end,
            trajectories: 100,
            ..c
        };
        let mut s = SuiteConfigs::default();
        s.oracle.samples = 5_000;
        s.measure.n_grid = vec![16, 64, 256];
        s.qtasep.events = 2_000;
        s.static_var = ExperimentConfig { samples: 400, ..small(s.static_var, 8, 0.01) };
        s.qv = small(s.qv, 8, 0.01);
        s.bg2 = ExperimentConfig { ell_grid: vec![1, 2, 4, 8, 16], checkpoints: 5, ..small(s.bg2, 8, 0.2) };
        s.ec = ExperimentConfig { eps_grid: vec![0.25, 0.5], delta_grid: vec![0.125], ..small(s.ec, 8, 0.2) };
        s.lemma = ExperimentConfig { n_grid: vec![8, 16], trajectories: 6, ..small(s.lemma, 8, 0.01) };
        s
    }

    /// Replaces every seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        for c in self.iter_mut() {
            c.seed = seed;
        }
        self
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ExperimentConfig> {
        [
            &mut self.oracle,
            &mut self.measure,
            &mut self.qtasep,
            &mut self.static_var,
            &mut self.qv,
            &mut self.bg2,
            &mut self.ec,
            &mut self.lemma,
        ]
        .into_iter()
    }
}

/// Key reference with units, for help text and config echoes.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("rate", "rate function name: qtasep, tanh or linear"),
    ("n", "scaling parameter n (dimensionless, positive integer)"),
    ("rho", "equilibrium density (particles per site)"),
    ("sites", "torus size L (lattice sites)"),
    ("t_end", "horizon T (macroscopic time; microscopic time is n^2 T)"),
    ("trajectories", "independent equilibrium trajectories (count)"),
    ("seed", "base seed of the random streams (u64)"),
    ("checkpoints", "equally spaced checkpoints on (0, T] (count)"),
    ("ell_grid", "block sizes ell (lattice sites)"),
    ("eps_grid", "energy-estimate scales eps (macroscopic length)"),
    ("delta_grid", "energy-estimate scales delta < eps (macroscopic length)"),
    ("n_grid", "values of n for scaling scans (dimensionless)"),
    ("test_functions", "test functions: {kind = \"bump\", amplitude, radius, center} or {kind = \"gaussian\", amplitude, sigma, center} (macroscopic length)"),
    ("samples", "independent equilibrium draws for static estimators (count)"),
    ("events", "jump events in the coupled q-TASEP run (count)"),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate(true).unwrap();
        let s = SuiteConfigs::default();
        for c in [&s.qv, &s.bg2, &s.ec, &s.static_var] {
            c.validate(true).unwrap();
        }
        for c in [&s.oracle, &s.measure, &s.qtasep, &s.lemma] {
            c.validate(false).unwrap();
        }
        let r = SuiteConfigs::reduced().with_seed(3);
        assert!(r.bg2.validate(false).is_ok() && r.ec.validate(false).is_ok());
        assert_eq!(r.qv.seed, 3);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let mut c = ExperimentConfig { sites: 100, ..Default::default() };
        let e = c.validate(false).unwrap_err().to_string();
        assert!(e.contains("sites"), "{e}");
        c.sites = 1024;
        c.ell_grid.clear();
        assert!(c.validate(false).unwrap_err().to_string().contains("ell_grid"));
        let c = ExperimentConfig { trajectories: 10, ..Default::default() };
        assert!(c.validate(false).is_ok());
        assert!(c.validate(true).unwrap_err().to_string().contains("trajectories"));
    }

    #[test]
    fn overrides_apply() {
        let base = ExperimentConfig::default();
        let o = ConfigOverrides { n: Some(16), rho: Some(1.0), ..Default::default() };
        let c = o.apply(&base);
        assert_eq!((c.n, c.sites, c.rho), (16, 512, 1.0));
        let o = ConfigOverrides { n: Some(16), sites: Some(300), ..Default::default() };
        assert_eq!(o.apply(&base).sites, 300);
        assert_eq!(ConfigOverrides::default().apply(&base), base);
        assert_eq!(CONFIG_KEYS.len(), 15);
    }
}
