//! Scheme-level invariants that need substrates and real solves.

mod support;

use eap_core::eap::{run_scheme, EapParams};
use eap_core::solver::SolverConfig;
use eap_core::substrate::{pack_circles, sample_radii, GammaParams, Substrate};

/// Adding circles to a substrate (seeds held fixed and extracellular in the
/// densest case) does not increase the fitted trace beyond quadrature noise.
#[test]
fn hindrance_monotonicity_on_nested_substrates() {
    let side = 50.0;
    let k0 = 450.0;
    let params = GammaParams::spanning(0.3, 2.0).unwrap();
    let radii = sample_radii(&params, 400, 31).unwrap();
    let full = pack_circles(side, &radii, k0, 31, 200_000).unwrap();

    let substrates: Vec<Substrate> = [0usize, 100, 400]
        .iter()
        .map(|&count| Substrate {
            side,
            k0,
            circles: full.circles[..count].to_vec(),
        })
        .collect();

    // Fixed seed box well inside; the eap seed sampler rejects against the
    // densest geometry only implicitly (the same rng seed on a sparser
    // substrate accepts on the first try more often), so instead verify
    // hindrance through the fitted traces with each substrate's own seeds.
    let mut config = SolverConfig::new(0.015);
    config.scheme = eap_core::solver::RkScheme::Rk2;
    config.diag_every = 16;
    let mut traces = Vec::new();
    for s in &substrates {
        let mut p = EapParams::new(96, 3, 16.0, 7);
        p.subtract_initial_covariance = true;
        let run = run_scheme(s, &p, &config, None).unwrap();
        traces.push(run.fit.sigma_xx + run.fit.sigma_yy);
    }
    eprintln!("traces over nested substrates: {traces:?}");
    for w in traces.windows(2) {
        assert!(
            w[1] <= w[0] * 1.01,
            "trace increased on denser substrate: {} -> {}",
            w[0],
            w[1]
        );
    }
    // densest case must hinder substantially, not just within noise
    assert!(traces[2] < 0.9 * traces[0]);
}

/// The mixture of per-seed densities integrates to one essentially exactly.
#[test]
fn mixture_integral_is_one() {
    let substrate = Substrate::free(16.0, 1.0);
    let config = SolverConfig::new(0.1);
    let run = run_scheme(&substrate, &EapParams::new(64, 4, 8.0, 11), &config, None).unwrap();
    assert!((run.mixture.integral() - 1.0).abs() < 1e-9);
}

/// Fitted covariance is symmetric by construction and positive definite.
#[test]
fn fit_symmetry_and_definiteness() {
    let substrate = Substrate::free(16.0, 1.0);
    let config = SolverConfig::new(0.1);
    let run = run_scheme(&substrate, &EapParams::new(64, 3, 8.0, 13), &config, None).unwrap();
    let cov = run.fit.covariance();
    assert_eq!(cov[0][1].to_bits(), cov[1][0].to_bits());
    assert!(cov[0][0] > 0.0);
    assert!(cov[0][0] * cov[1][1] - cov[0][1] * cov[0][1] > 0.0);
}
