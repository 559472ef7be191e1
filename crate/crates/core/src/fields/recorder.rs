use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use super::{block_size, field_at_offset, support_sites, FieldContext, FrozenIntegrands, IntegrandValues, TestFunction};
use crate::error::{Error, Result};
use crate::lattice::{Configuration, Observer};

/// Largest frame displacement, in sites, covered by one quadrature panel.
const MAX_PANEL_SHIFT: f64 = 0.25;

const GL2_NODES: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];
const GL4_NODES: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
const GL4_WEIGHTS: [f64; 4] = [0.347_854_845_137_453_8, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_8];

/// A time integrand the recorder can accumulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum IntegrandKind {
    Drift,
    QuadraticVariation,
    Symmetric,
    Antisymmetric,
    Modified,
    Ec1,
    /// `sum_j Q(ell)_j Grad phi_j` at block size `ell`.
    Quadratic(usize),
}

impl IntegrandKind {
    pub fn name(&self) -> String {
        match self {
            IntegrandKind::Drift => "drift".into(),
            IntegrandKind::QuadraticVariation => "qv".into(),
            IntegrandKind::Symmetric => "symmetric".into(),
            IntegrandKind::Antisymmetric => "antisymmetric".into(),
            IntegrandKind::Modified => "modified".into(),
            IntegrandKind::Ec1 => "ec1".into(),
            IntegrandKind::Quadratic(ell) => format!("q_l{ell}"),
        }
    }

    fn pick(&self, v: &IntegrandValues, ells: &[usize]) -> f64 {
        match self {
            IntegrandKind::Drift => v.drift(),
            IntegrandKind::QuadraticVariation => v.qv,
            IntegrandKind::Symmetric => v.symmetric,
            IntegrandKind::Antisymmetric => v.antisymmetric,
            IntegrandKind::Modified => v.modified,
            IntegrandKind::Ec1 => v.ec1,
            IntegrandKind::Quadratic(ell) => v.quadratic[ells.iter().position(|e| e == ell).expect("registered block")],
        }
    }
}

/// What a [`TrajectoryRecorder`] measures.
#[derive(Debug, Clone)]
pub struct RecorderSpec {
    pub phi: TestFunction,
    pub integrands: Vec<IntegrandKind>,
    /// Checkpoint times after the start, strictly increasing.
    pub checkpoints: Vec<f64>,
}

impl RecorderSpec {
    /// `count` equally spaced checkpoints on `(0, t_end]`.
    pub fn uniform(phi: TestFunction, integrands: Vec<IntegrandKind>, t_end: f64, count: usize) -> Self {
        let checkpoints = (1..=count).map(|k| t_end * k as f64 / count as f64).collect();
        RecorderSpec { phi, integrands, checkpoints }
    }

    fn ells(&self) -> Vec<usize> {
        let mut ells: Vec<usize> = self
            .integrands
            .iter()
            .filter_map(|k| if let IntegrandKind::Quadratic(ell) = k { Some(*ell) } else { None })
            .collect();
        ells.sort_unstable();
        ells.dedup();
        ells
    }
}

/// Checkpointed field values and cumulative integrals of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub index: u64,
    pub events: u64,
    /// Checkpoint times, starting with the initial time.
    pub times: Vec<f64>,
    /// `X_t(phi)` at each checkpoint.
    pub field: Vec<f64>,
    /// Cumulative integrals from the initial time, keyed by integrand name.
    pub integrals: BTreeMap<String, Vec<f64>>,
}

impl TrajectoryRecord {
    pub fn integral(&self, kind: IntegrandKind) -> Result<&[f64]> {
        self.integrals
            .get(&kind.name())
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::MissingObserver(kind.name()))
    }

    /// `t,value` rows for `field` or any recorded integrand.
    pub fn to_csv(&self, observable: &str) -> Result<String> {
        let values = if observable == "field" {
            &self.field
        } else {
            self.integrals.get(observable).ok_or_else(|| Error::MissingObserver(observable.into()))?
        };
        let mut out = String::from("t,value\n");
        for (t, v) in self.times.iter().zip(values) {
            let _ = writeln!(out, "{t},{v}");
        }
        Ok(out)
    }
}

/// `M_t = X_t - X_0 - int_0^t (d/ds + L_n) X_s ds` at every checkpoint.
pub fn martingale_path(rec: &TrajectoryRecord) -> Result<Vec<f64>> {
    let drift = rec.integral(IntegrandKind::Drift)?;
    let x0 = rec.field[0];
    Ok(rec.field.iter().zip(drift).map(|(x, d)| x - x0 - d).collect())
}

/// `int modified - int sum_j Q(ell)_j Grad phi_j` at every checkpoint.
pub fn bg2_deviation(rec: &TrajectoryRecord, ell: usize) -> Result<Vec<f64>> {
    let b = rec.integral(IntegrandKind::Modified)?;
    let q = rec.integral(IntegrandKind::Quadratic(ell))?;
    Ok(b.iter().zip(q).map(|(x, y)| x - y).collect())
}

/// `A^eps_{s,t} = int_s^t sum_j (block average)^2 Grad phi_j dr` between
/// checkpoints `s` and `t` (indices into `times`). The `sigma^2 / ell`
/// centering in the recorded `Q` integrals sums to zero against `Grad phi`.
pub fn a_eps_increment(rec: &TrajectoryRecord, eps: f64, ctx: &FieldContext, s: usize, t: usize) -> Result<f64> {
    let half_g2 = 0.5 * ctx.g.d2_at_0;
    if half_g2 == 0.0 {
        return Err(Error::InvalidArgument("A^eps is recovered from Q, which vanishes when g''(0) = 0".into()));
    }
    let ell = block_size(eps, ctx.n)?;
    let q = rec.integral(IntegrandKind::Quadratic(ell))?;
    Ok((q[t] - q[s]) / half_g2)
}

/// Observer that integrates the registered integrands along a trajectory.
///
/// Integration is lazy: the held state is only integrated when a jump is
/// about to change a site the integrands can see, when the frame has moved
/// by a quarter site, or at a checkpoint.
pub struct TrajectoryRecorder {
    spec: RecorderSpec,
    ctx: Arc<FieldContext>,
    ells: Vec<usize>,
    ell_max: usize,
    started: bool,
    pending: f64,
    next_checkpoint: usize,
    events: u64,
    acc: Vec<f64>,
    times: Vec<f64>,
    field: Vec<f64>,
    series: Vec<Vec<f64>>,
}

impl TrajectoryRecorder {
    pub fn new(spec: RecorderSpec, ctx: Arc<FieldContext>) -> Self {
        assert!(spec.checkpoints.windows(2).all(|w| w[0] < w[1]), "checkpoints must increase");
        let ells = spec.ells();
        let k = spec.integrands.len();
        TrajectoryRecorder {
            ell_max: ells.iter().copied().max().unwrap_or(1),
            ells,
            ctx,
            started: false,
            pending: 0.0,
            next_checkpoint: 0,
            events: 0,
            acc: vec![0.0; k],
            times: Vec::new(),
            field: Vec::new(),
            series: vec![Vec::new(); k],
            spec,
        }
    }

    pub fn finish(self, seed: u64, index: u64) -> TrajectoryRecord {
        let integrals =
            self.spec.integrands.iter().map(|k| k.name()).zip(self.series).collect::<BTreeMap<_, _>>();
        TrajectoryRecord { seed, index, events: self.events, times: self.times, field: self.field, integrals }
    }

    fn checkpoint(&mut self, cfg: &Configuration, t: f64) {
        self.times.push(t);
        self.field.push(field_at_offset(cfg, self.ctx.offset(t), &self.spec.phi, self.ctx.rho));
        for (s, a) in self.series.iter_mut().zip(&self.acc) {
            s.push(*a);
        }
    }

    /// Integrates the held state over `[a, b]` in panels of bounded frame
    /// displacement. Panels that move the frame by at most 1/64 of a site
    /// use the midpoint rule, those within 1/8 two Gauss-Legendre nodes, the
    /// rest four.
    fn integrate(&mut self, cfg: &Configuration, a: f64, b: f64) {
        if b <= a {
            return;
        }
        let n = self.ctx.n;
        let oa = self.ctx.offset(a);
        let base = oa.rem_euclid(cfg.sites() as f64);
        let ob = base + (self.ctx.offset(b) - oa);
        let (lo, _) = support_sites(&self.spec.phi, base.min(ob), n, 2);
        let (_, hi) = support_sites(&self.spec.phi, base.max(ob), n, 2);
        let frozen = FrozenIntegrands::new(cfg, lo, hi, &self.ctx, &self.ells);
        let shift = (ob - base).abs();
        let panels = ((shift / MAX_PANEL_SHIFT).ceil() as usize).max(1);
        let per_panel = shift / panels as f64;
        let (nodes, weights): (&[f64], &[f64]) = if per_panel <= 1.0 / 64.0 {
            (&[0.0], &[2.0])
        } else if per_panel <= 1.0 / 8.0 {
            (&GL2_NODES, &[1.0, 1.0])
        } else {
            (&GL4_NODES, &GL4_WEIGHTS)
        };
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            for (x, w) in nodes.iter().zip(weights) {
                let t = mid + 0.5 * h * x;
                let v = frozen.eval(base + (self.ctx.offset(t) - oa), &self.spec.phi);
                for (slot, kind) in self.acc.iter_mut().zip(&self.spec.integrands) {
                    *slot += 0.5 * h * w * kind.pick(&v, &self.ells);
                }
            }
        }
    }

    /// Whether a jump out of `j` changes a site visible from the frame at
    /// the pending start.
    fn touches(&self, cfg: &Configuration, j: usize) -> bool {
        let l = cfg.sites() as i64;
        let offset = self.ctx.offset(self.pending).rem_euclid(l as f64);
        let (lo, hi) = support_sites(&self.spec.phi, offset, self.ctx.n, 4);
        let hi = hi + self.ell_max as i64;
        let width = hi - lo;
        if width + 1 >= l {
            return true;
        }
        [j as i64, j as i64 + 1].iter().any(|&s| (s - lo).rem_euclid(l) <= width)
    }
}

impl Observer for TrajectoryRecorder {
    fn hold(&mut self, cfg: &Configuration, t0: f64, t1: f64, next_jump: Option<usize>) {
        if !self.started {
            self.started = true;
            self.pending = t0;
            self.checkpoint(cfg, t0);
        }
        while let Some(&c) = self.spec.checkpoints.get(self.next_checkpoint) {
            if c > t1 {
                break;
            }
            self.integrate(cfg, self.pending, c);
            self.pending = c;
            self.checkpoint(cfg, c);
            self.next_checkpoint += 1;
        }
        let flush = match next_jump {
            None => true,
            Some(j) => {
                self.events += 1;
                self.ctx.speed().abs() * (t1 - self.pending) > MAX_PANEL_SHIFT || self.touches(cfg, j)
            }
        };
        if flush {
            self.integrate(cfg, self.pending, t1);
            self.pending = t1;
        }
    }
}
