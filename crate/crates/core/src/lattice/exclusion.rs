//! q-TASEP as an exclusion process on a ring of `M = L + N` sites.
//!
//! Exclusion particle `j` sits at `x_j` and zero-range site `j` holds the
//! `gap_j = x_j - x_{j-1} - 1` empty sites to its left (indices mod `L`,
//! with `x_{-1} = x_{L-1} - M`). A zero-range jump `j -> j + 1` is particle
//! `j` stepping one site to the left, at rate `1 - q^{gap_j}` with
//! `q = e^{-1/sqrt(n)}`.

use rand::Rng;

use super::{Configuration, SumTree};
use crate::error::{Error, Result};
use crate::rates::{RateFunction, RateKind};

/// Particle positions, unwrapped so that `x_0 < x_1 < ... < x_{L-1} < x_0 + M`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExclusionState {
    positions: Vec<i64>,
    ring: u64,
}

impl ExclusionState {
    pub fn new(positions: Vec<i64>, ring: u64) -> Result<Self> {
        let state = ExclusionState { positions, ring };
        state.validate()?;
        Ok(state)
    }

    fn validate(&self) -> Result<()> {
        let l = self.positions.len();
        if l == 0 {
            return Err(Error::InconsistentRing("no particles".into()));
        }
        if (l as u64) > self.ring {
            return Err(Error::InconsistentRing(format!("{l} particles on a ring of {} sites", self.ring)));
        }
        if self.positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InconsistentRing("positions are not strictly increasing".into()));
        }
        if self.positions[l - 1] >= self.positions[0] + self.ring as i64 {
            return Err(Error::InconsistentRing("positions span more than one turn of the ring".into()));
        }
        Ok(())
    }

    pub fn positions(&self) -> &[i64] {
        &self.positions
    }

    /// Positions reduced into `[0, M)`.
    pub fn positions_mod(&self) -> Vec<u64> {
        self.positions.iter().map(|&x| x.rem_euclid(self.ring as i64) as u64).collect()
    }

    pub fn ring(&self) -> u64 {
        self.ring
    }

    pub fn particles(&self) -> usize {
        self.positions.len()
    }

    /// Empty sites between particle `j` and its left neighbour.
    pub fn gap(&self, j: usize) -> u32 {
        let l = self.positions.len();
        let left = if j == 0 { self.positions[l - 1] - self.ring as i64 } else { self.positions[j - 1] };
        (self.positions[j] - left - 1) as u32
    }

    pub fn gaps(&self) -> Vec<u32> {
        (0..self.positions.len()).map(|j| self.gap(j)).collect()
    }

    /// Moves particle `j` one site to the left.
    pub fn step_left(&mut self, j: usize) -> Result<()> {
        if self.gap(j) == 0 {
            return Err(Error::InconsistentRing(format!("particle {j} is blocked")));
        }
        self.positions[j] -= 1;
        Ok(())
    }
}

/// Exclusion image of `cfg` with particle 0 at the origin.
pub fn zr_to_exclusion(cfg: &Configuration) -> ExclusionState {
    zr_to_exclusion_anchored(cfg, 0)
}

/// Exclusion image of `cfg` with particle 0 at `anchor`.
pub fn zr_to_exclusion_anchored(cfg: &Configuration, anchor: i64) -> ExclusionState {
    let occ = cfg.occupancy();
    let ring = occ.len() as u64 + cfg.total_particles();
    let mut positions = Vec::with_capacity(occ.len());
    let mut x = anchor;
    positions.push(x);
    for &k in &occ[1..] {
        x += k as i64 + 1;
        positions.push(x);
    }
    ExclusionState { positions, ring }
}

/// Zero-range configuration read off the gaps of `ex`.
pub fn exclusion_to_zr(ex: &ExclusionState, n: u32, g: &RateFunction) -> Result<Configuration> {
    ex.validate()?;
    Ok(Configuration::new(ex.gaps(), n, g))
}

/// q-TASEP driven in both representations by the same uniforms.
#[derive(Debug, Clone)]
pub struct CoupledQtasep {
    zr: Configuration,
    ex: ExclusionState,
    ex_rates: SumTree,
    q: f64,
    speed: f64,
    events: u64,
    ex_clock: f64,
}

impl CoupledQtasep {
    pub fn new(zr: Configuration) -> Result<Self> {
        if zr.rate_function().kind() != RateKind::QTasep {
            return Err(Error::InvalidArgument("coupling requires the qtasep rate function".into()));
        }
        let n = zr.n() as f64;
        let q = (-1.0 / n.sqrt()).exp();
        let ex = zr_to_exclusion(&zr);
        let weights: Vec<f64> = ex.gaps().iter().map(|&k| exclusion_rate(q, k)).collect();
        Ok(CoupledQtasep {
            ex_clock: zr.clock(),
            zr,
            ex,
            ex_rates: SumTree::from_weights(&weights),
            q,
            speed: n.powf(2.5),
            events: 0,
        })
    }

    pub fn zero_range(&self) -> &Configuration {
        &self.zr
    }

    pub fn exclusion(&self) -> &ExclusionState {
        &self.ex
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Clocks of the zero-range and exclusion sides.
    pub fn clocks(&self) -> (f64, f64) {
        (self.zr.clock(), self.ex_clock)
    }

    /// One event in both representations. `u1` sets the holding time and
    /// `u2` picks the firing site by tree descent on each side.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(usize, f64)> {
        let zr_total = self.zr.total_rate();
        let ex_total = self.speed * self.ex_rates.total();
        if !(zr_total > 0.0) || !(ex_total > 0.0) {
            return Err(Error::FrozenState);
        }
        let u1: f64 = rng.random();
        let e = -(-u1).ln_1p();
        let (j_zr, j_ex) = loop {
            let u2: f64 = rng.random();
            match (
                self.zr.tree.find(u2 * zr_total),
                self.ex_rates.find(u2 * self.ex_rates.total()),
            ) {
                (Some(a), Some(b)) => break (a, b),
                (None, None) => continue,
                _ => return Err(Error::Decoupled { event: self.events + 1 }),
            }
        };
        self.events += 1;
        if j_zr != j_ex {
            return Err(Error::Decoupled { event: self.events });
        }
        let dt_zr = e / zr_total;
        let dt_ex = e / ex_total;
        self.zr.apply_jump(j_zr)?;
        self.zr.set_clock(self.zr.clock() + dt_zr);
        self.ex.step_left(j_ex)?;
        self.ex_clock += dt_ex;
        let l = self.ex.particles();
        for k in [j_ex, (j_ex + 1) % l] {
            self.ex_rates.update(k, exclusion_rate(self.q, self.ex.gap(k)));
        }
        if self.ex.gaps() != self.zr.occupancy() || (dt_zr - dt_ex).abs() > 1e-10 * dt_zr {
            return Err(Error::Decoupled { event: self.events });
        }
        Ok((j_zr, dt_zr))
    }
}

#[inline]
fn exclusion_rate(q: f64, gap: u32) -> f64 {
    -(gap as f64 * q.ln()).exp_m1()
}

/// Largest relative gap between `n^{5/2}(1 - q^k)` and `n^2 g_n(k)` over
/// `1 <= k <= kmax`.
pub fn rate_identity_error(n: u32, kmax: u32) -> f64 {
    let g = RateFunction::qtasep();
    let nf = n as f64;
    let q = (-1.0 / nf.sqrt()).exp();
    (1..=kmax)
        .map(|k| {
            let lhs = nf.powf(2.5) * exclusion_rate(q, k);
            let rhs = nf * nf * crate::rates::eval_gn(k, n, &g);
            (lhs - rhs).abs() / rhs
        })
        .fold(0.0, f64::max)
}
