use serde::Serialize;

use super::{apply_generator, w_value, LocalFunction};
use crate::rates::RateFunction;

/// One checked identity at one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityGap {
    pub identity: String,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    /// Whether the identity is expected to hold exactly.
    pub exact: bool,
    pub inputs_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub n: u32,
    pub site: usize,
    pub eta_j: u32,
    pub identities: Vec<IdentityGap>,
    /// `n^{3/2} |W_j - eta_j - quadratic - cubic|`.
    pub taylor_residual_scaled: f64,
    /// `sup|g''''| eta_j^4 / (24 g'(0))`.
    pub taylor_bound: f64,
}

impl IdentityReport {
    /// Largest gap among identities expected to be exact.
    pub fn max_exact_gap(&self) -> f64 {
        self.identities.iter().filter(|i| i.exact).map(|i| i.gap.abs()).fold(0.0, f64::max)
    }

    pub fn taylor_within_bound(&self, rel_slack: f64) -> bool {
        self.taylor_residual_scaled <= self.taylor_bound * (1.0 + rel_slack)
    }

    pub fn gap(&self, identity: &str) -> Option<f64> {
        self.identities.iter().find(|i| i.identity == identity).map(|i| i.gap)
    }
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    bytes.into_iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn inputs_hash(eta: &[u32], n: u32, g: &RateFunction, j: usize) -> String {
    let bytes = eta
        .iter()
        .flat_map(|k| k.to_le_bytes())
        .chain(n.to_le_bytes())
        .chain(g.name.bytes())
        .chain((j as u64).to_le_bytes());
    format!("{:016x}", fnv1a(bytes))
}

/// Checks the remainder-free generator identities at site `j` and evaluates
/// the Taylor residual of `W_j`.
///
/// With `L~ = L_n / (n^2 g'(0))`:
/// - `L~(eta^2 - eta) = 2 (W_{j-1} - W_j) eta + 2 W_j`
/// - `L~(eta^3 + 3/2 eta^2 - 5/2 eta) = 3 (W_{j-1} - W_j) eta^2 + 6 W_{j-1} eta + 3 W_j`
///
/// The cubic with `+5/2 eta` is also reported; it differs from the right
/// side by exactly `5 (W_{j-1} - W_j)`.
pub fn expansion_identity_suite(eta: &[u32], n: u32, g: &RateFunction, j: usize) -> IdentityReport {
    let l = eta.len();
    let jm = (j + l - 1) % l;
    let scale = (n as f64).powi(2) * g.d1_at_0;
    let tilde = |f: &LocalFunction| apply_generator(f, eta, n, g) / scale;
    let x = eta[j] as f64;
    let (wl, wj) = (w_value(eta[jm], n, g), w_value(eta[j], n, g));
    let hash = inputs_hash(eta, n, g, j);

    let quad = LocalFunction::site(j, "eta^2 - eta", |k| {
        let k = k as f64;
        k * k - k
    });
    let cubic = LocalFunction::site(j, "eta^3 + 1.5 eta^2 - 2.5 eta", |k| {
        let k = k as f64;
        k * k * k + 1.5 * k * k - 2.5 * k
    });
    let printed = LocalFunction::site(j, "eta^3 + 1.5 eta^2 + 2.5 eta", |k| {
        let k = k as f64;
        k * k * k + 1.5 * k * k + 2.5 * k
    });
    let quad_rhs = 2.0 * (wl - wj) * x + 2.0 * wj;
    let cubic_rhs = 3.0 * (wl - wj) * x * x + 6.0 * wl * x + 3.0 * wj;

    let entry = |name: &str, lhs: f64, rhs: f64, exact: bool| IdentityGap {
        identity: name.to_string(),
        lhs,
        rhs,
        gap: lhs - rhs,
        exact,
        inputs_hash: hash.clone(),
    };
    let identities = vec![
        entry("quadratic", tilde(&quad), quad_rhs, true),
        entry("cubic", tilde(&cubic), cubic_rhs, true),
        entry("cubic_plus_five_halves", tilde(&printed), cubic_rhs, false),
    ];

    let sn = (n as f64).sqrt();
    let approx = x + g.d2_at_0 / (2.0 * g.d1_at_0) * x * x / sn + g.d3_at_0 / (6.0 * g.d1_at_0) * x.powi(3) / (n as f64);
    let taylor_residual_scaled = (n as f64).powf(1.5) * (wj - approx).abs();
    let taylor_bound = g.d4_sup * x.powi(4) / (24.0 * g.d1_at_0);

    IdentityReport { n, site: j, eta_j: eta[j], identities, taylor_residual_scaled, taylor_bound }
}

/// JSON array of identity gaps for a batch of reports.
pub fn oracle_report_json(reports: &[IdentityReport]) -> String {
    let rows: Vec<&IdentityGap> = reports.iter().flat_map(|r| r.identities.iter()).collect();
    serde_json::to_string_pretty(&rows).expect("identity rows serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_site_is_trivial() {
        let g = RateFunction::qtasep();
        let r = expansion_identity_suite(&[0, 0, 0, 0], 16, &g, 1);
        assert_eq!(r.max_exact_gap(), 0.0);
        assert_eq!(r.taylor_residual_scaled, 0.0);
    }

    #[test]
    fn identities_hold_on_random_configurations() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for g in [RateFunction::qtasep(), RateFunction::tanh(), RateFunction::linear()] {
            for n in [16, 64, 256] {
                for _ in 0..300 {
                    let eta: Vec<u32> = (0..7).map(|_| rng.random_range(0..=10)).collect();
                    let r = expansion_identity_suite(&eta, n, &g, 3);
                    assert!(r.max_exact_gap() < 1e-9, "{r:?}");
                    assert!(r.taylor_within_bound(1e-9), "{r:?}");
                    let wl = w_value(eta[2], n, &g);
                    let wj = w_value(eta[3], n, &g);
                    let expected = 5.0 * (wl - wj);
                    assert!((r.gap("cubic_plus_five_halves").unwrap() - expected).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn printed_cubic_is_not_exact() {
        let g = RateFunction::qtasep();
        let r = expansion_identity_suite(&[2, 0, 1, 0], 16, &g, 1);
        assert!(r.gap("cubic_plus_five_halves").unwrap().abs() > 1.0);
        assert!(r.gap("cubic").unwrap().abs() < 1e-12);
    }

    #[test]
    fn report_serializes() {
        let g = RateFunction::qtasep();
        let r = expansion_identity_suite(&[1, 2, 3], 4, &g, 1);
        let json = oracle_report_json(&[r]);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 3);
        assert_eq!(v[0]["identity"], "quadratic");
        assert_eq!(v[0]["inputs_hash"].as_str().unwrap().len(), 16);
    }
}
