use statrs::distribution::{ChiSquared, ContinuousCDF};

use zrlab::experiments::{map_indexed, stream_rng, Moments};
use zrlab::generator::{canonical_measure, FiniteStateSpace};
use zrlab::lattice::Configuration;
use zrlab::measure::{sample_configuration, solve_fugacity, SiteMarginal};
use zrlab::rates::RateFunction;

fn chi_square_p(observed: &[f64], expected: &[f64]) -> f64 {
    let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

#[test]
fn event_count_matches_stationary_rate() {
    // Under the invariant measure the total rate has mean n^2 L Phi.
    let g = RateFunction::qtasep();
    let (n, sites, t_end, rho) = (4u32, 64usize, 0.5, 0.8);
    let phi = solve_fugacity(rho, n, &g).unwrap().phi;
    let sm = SiteMarginal::new(phi, n, &g).unwrap();
    let counts = map_indexed(300, None, |i| {
        let mut rng = stream_rng(11, 1, i);
        let mut cfg = sample_configuration(&sm, sites, &mut rng);
        cfg.run_until(t_end, &mut rng, &mut []).map(|e| e as f64)
    })
    .unwrap();
    let m = Moments::from_slice(&counts);
    let expected = (n * n) as f64 * sites as f64 * phi * t_end;
    assert!((m.mean - expected).abs() < 4.0 * m.standard_error(), "{} vs {expected}", m.mean);
}

#[test]
fn long_run_visits_states_with_canonical_frequencies() {
    let g = RateFunction::qtasep();
    let (n, sites, particles) = (2u32, 4usize, 3u32);
    let fss = FiniteStateSpace::new(sites, particles).unwrap();
    let pi = canonical_measure(&fss, 0.5, n, &g);
    let mut counts = vec![0.0; fss.len()];
    let mut rng = stream_rng(5, 2, 0);
    let mut cfg = Configuration::new(vec![3, 0, 0, 0], n, &g);
    let samples = 20_000;
    for k in 1..=samples {
        cfg.run_until(0.5 * k as f64, &mut rng, &mut []).unwrap();
        counts[fss.index_of(cfg.occupancy()).unwrap()] += 1.0;
    }
    let expected: Vec<f64> = pi.iter().map(|p| p * samples as f64).collect();
    let p = chi_square_p(&counts, &expected);
    assert!(p > 1e-3, "chi-square p = {p}");
}

#[test]
fn site_marginal_is_preserved_by_the_dynamics() {
    let g = RateFunction::qtasep();
    let (n, sites, rho) = (4u32, 32usize, 1.0);
    let phi = solve_fugacity(rho, n, &g).unwrap().phi;
    let sm = SiteMarginal::new(phi, n, &g).unwrap();
    let finals = map_indexed(3000, None, |i| {
        let mut rng = stream_rng(3, 3, i);
        let mut cfg = sample_configuration(&sm, sites, &mut rng);
        cfg.run_until(0.3, &mut rng, &mut [])?;
        Ok(cfg.occupancy()[0])
    })
    .unwrap();
    let bins = 5usize;
    let mut observed = vec![0.0; bins];
    for k in finals {
        observed[(k as usize).min(bins - 1)] += 1.0;
    }
    let mut expected: Vec<f64> = (0..bins - 1).map(|k| sm.pmf(k) * 3000.0).collect();
    expected.push(3000.0 - expected.iter().sum::<f64>());
    let p = chi_square_p(&observed, &expected);
    assert!(p > 1e-3, "chi-square p = {p}");
}

#[test]
fn particle_number_and_clock_are_conserved_over_a_run() {
    let g = RateFunction::tanh();
    let sm = SiteMarginal::new(solve_fugacity(0.7, 8, &g).unwrap().phi, 8, &g).unwrap();
    let mut rng = stream_rng(1, 4, 0);
    let mut cfg = sample_configuration(&sm, 100, &mut rng);
    let total = cfg.total_particles();
    let events = cfg.run_until(0.05, &mut rng, &mut []).unwrap();
    assert!(events > 0);
    assert_eq!(cfg.total_particles(), total);
    assert_eq!(cfg.clock(), 0.05);
    assert!(cfg.audit_rate_index() < 1e-12);
}
