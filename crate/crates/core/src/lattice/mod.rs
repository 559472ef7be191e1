//! Exact event-driven simulation of the totally asymmetric zero-range process
//! on a torus of `L` sites: site `j` fires at rate `n^2 g_n(eta_j)` and sends
//! one particle to `j + 1 (mod L)`.

mod exclusion;
mod sumtree;

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;

pub use exclusion::{
    exclusion_to_zr, rate_identity_error, zr_to_exclusion, zr_to_exclusion_anchored, CoupledQtasep, ExclusionState,
};
pub use sumtree::SumTree;

use crate::error::{Error, Result};
use crate::rates::{RateFunction, RateTable};

/// Occupancies up to this value have their rates tabulated.
const RATE_TABLE_MAX: u32 = 512;

/// Occupancy vector on the torus with an incrementally maintained rate index.
#[derive(Debug, Clone)]
pub struct Configuration {
    occupancy: Vec<u32>,
    total_particles: u64,
    n: u32,
    time_scale: f64,
    rates: Arc<RateTable>,
    tree: SumTree,
    clock: f64,
}

impl PartialEq for Configuration {
    fn eq(&self, other: &Self) -> bool {
        self.occupancy == other.occupancy && self.n == other.n && self.rates.rate_function() == other.rates.rate_function()
    }
}

/// Receives every holding interval of a trajectory.
pub trait Observer {
    /// `cfg` is the state held on `[t0, t1)`. `next_jump` is the site that
    /// fires at `t1`, or `None` when the run stops at `t1`.
    fn hold(&mut self, cfg: &Configuration, t0: f64, t1: f64, next_jump: Option<usize>);
}

impl Configuration {
    pub fn new(occupancy: Vec<u32>, n: u32, g: &RateFunction) -> Self {
        Self::with_rates(occupancy, Arc::new(RateTable::new(g, n, RATE_TABLE_MAX)))
    }

    pub fn with_rates(occupancy: Vec<u32>, rates: Arc<RateTable>) -> Self {
        assert!(!occupancy.is_empty(), "lattice must have at least one site");
        let n = rates.n();
        let time_scale = (n as f64).powi(2);
        let weights: Vec<f64> = occupancy.iter().map(|&k| time_scale * rates.gn(k)).collect();
        Configuration {
            total_particles: occupancy.iter().map(|&k| k as u64).sum(),
            occupancy,
            n,
            time_scale,
            rates,
            tree: SumTree::from_weights(&weights),
            clock: 0.0,
        }
    }

    #[inline]
    pub fn occupancy(&self) -> &[u32] {
        &self.occupancy
    }

    #[inline]
    pub fn sites(&self) -> usize {
        self.occupancy.len()
    }

    pub fn total_particles(&self) -> u64 {
        self.total_particles
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn set_clock(&mut self, t: f64) {
        self.clock = t;
    }

    pub fn rate_table(&self) -> &Arc<RateTable> {
        &self.rates
    }

    pub fn rate_function(&self) -> &RateFunction {
        self.rates.rate_function()
    }

    /// `g_n(eta_j)` with periodic indexing.
    #[inline]
    pub fn gn_at(&self, j: usize) -> f64 {
        self.rates.gn(self.occupancy[j])
    }

    /// Total jump rate `n^2 sum_j g_n(eta_j)`.
    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    pub fn site_rate(&self, j: usize) -> f64 {
        self.tree.leaf(j)
    }

    /// Draws the next firing site and holding time without changing state.
    pub fn next_event<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(usize, f64)> {
        let total = self.tree.total();
        if !(total > 0.0) {
            return Err(Error::FrozenState);
        }
        let u: f64 = rng.random();
        let dt = -(-u).ln_1p() / total;
        loop {
            let v: f64 = rng.random();
            if let Some(j) = self.tree.find(v * total) {
                return Ok((j, dt));
            }
        }
    }

    /// Moves one particle from `j` to `j + 1 (mod L)`; two leaves change.
    pub fn apply_jump(&mut self, j: usize) -> Result<()> {
        if self.occupancy[j] == 0 {
            return Err(Error::EmptySiteJump { site: j });
        }
        let k = (j + 1) % self.occupancy.len();
        self.occupancy[j] -= 1;
        self.occupancy[k] += 1;
        self.tree.update(j, self.time_scale * self.rates.gn(self.occupancy[j]));
        self.tree.update(k, self.time_scale * self.rates.gn(self.occupancy[k]));
        Ok(())
    }

    /// Runs until the clock reaches `t_end`, notifying observers of every
    /// holding interval before the state changes. The final interval is
    /// clipped at `t_end`. Returns the number of jumps performed.
    pub fn run_until<R: Rng + ?Sized>(
        &mut self,
        t_end: f64,
        rng: &mut R,
        observers: &mut [&mut dyn Observer],
    ) -> Result<u64> {
        let mut events = 0u64;
        while self.clock < t_end {
            let (j, dt) = self.next_event(rng)?;
            let t1 = self.clock + dt;
            if t1 >= t_end {
                for obs in observers.iter_mut() {
                    obs.hold(self, self.clock, t_end, None);
                }
                self.clock = t_end;
                break;
            }
            for obs in observers.iter_mut() {
                obs.hold(self, self.clock, t1, Some(j));
            }
            self.apply_jump(j)?;
            self.clock = t1;
            events += 1;
        }
        Ok(events)
    }

    /// Largest relative mismatch between stored leaves and freshly computed
    /// site rates, combined with the internal-node rebuild check.
    pub fn audit_rate_index(&self) -> f64 {
        let mut worst = self.tree.audit() / self.tree.total().max(1.0);
        for (j, &k) in self.occupancy.iter().enumerate() {
            let fresh = self.time_scale * self.rates.gn(k);
            let leaf = self.tree.leaf(j);
            if k == 0 && leaf != 0.0 {
                return f64::INFINITY;
            }
            let rel = (leaf - fresh).abs() / fresh.max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
        }
        worst
    }

    /// Text snapshot: a `#` header with run metadata, then `j occupancy` rows.
    pub fn to_snapshot(&self, seed: u64) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# L={} N={} n={} g={} clock={} seed={}",
            self.sites(),
            self.total_particles,
            self.n,
            self.rate_function().name,
            self.clock,
            seed
        );
        for (j, k) in self.occupancy.iter().enumerate() {
            let _ = writeln!(out, "{j} {k}");
        }
        out
    }

    /// Inverse of [`Configuration::to_snapshot`]; returns the state and seed.
    pub fn from_snapshot(text: &str) -> Result<(Self, u64)> {
        let bad = |m: &str| Error::InvalidArgument(format!("snapshot: {m}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        let header = header.strip_prefix("# ").ok_or_else(|| bad("missing header"))?;
        let mut fields = std::collections::HashMap::new();
        for item in header.split_whitespace() {
            let (k, v) = item.split_once('=').ok_or_else(|| bad(item))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(&format!("missing {k}")));
        let sites: usize = get("L")?.parse().map_err(|_| bad("L"))?;
        let particles: u64 = get("N")?.parse().map_err(|_| bad("N"))?;
        let n: u32 = get("n")?.parse().map_err(|_| bad("n"))?;
        let g: RateFunction = get("g")?.parse()?;
        let clock: f64 = get("clock")?.parse().map_err(|_| bad("clock"))?;
        let seed: u64 = get("seed")?.parse().map_err(|_| bad("seed"))?;
        let mut occ = vec![0u32; sites];
        let mut seen = 0;
        for line in lines {
            let mut it = line.split_whitespace();
            let j: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(line))?;
            let k: u32 = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(line))?;
            if j >= sites {
                return Err(bad("site out of range"));
            }
            occ[j] = k;
            seen += 1;
        }
        if seen != sites {
            return Err(bad("row count does not match L"));
        }
        let mut cfg = Configuration::new(occ, n, &g);
        if cfg.total_particles != particles {
            return Err(bad("particle count does not match N"));
        }
        cfg.clock = clock;
        Ok((cfg, seed))
    }
}
