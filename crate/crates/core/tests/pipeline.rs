//! Cross-module properties: ρ from the phase chain against the renewal
//! equation, invariance of the backward limit, and the kernel-level bounds.

use proptest::prelude::*;
use renewal_core::asymptotics::{hazard_pairing, nu_infty};
use renewal_core::kernel::{make_age_time, verify_kernel};
use renewal_core::metrics::tv_distance;
use renewal_core::phasechain::{residual_rho, solve_phase, PhaseSettings};
use renewal_core::volterra::{solve_renewal, InitialLaw};

#[test]
fn renewal_rate_converges_to_rho() {
    let k = make_age_time(0.5, 1.0, 1.0, 1.0).unwrap();
    let ph = solve_phase(&k, &PhaseSettings::default()).unwrap();
    let sol = solve_renewal(&k, &InitialLaw::delta0(), 0.0, 12.0, 1e-3).unwrap();
    for &t in &[10.0, 10.3, 11.7] {
        let r = sol.rate_at(t).unwrap();
        assert!((r - ph.rho.eval(t)).abs() < 1e-5, "t = {t}: {r} vs {}", ph.rho.eval(t));
    }
    let (a, b) = residual_rho(&ph.rho, &ph.folded);
    assert!(a < 1e-8 && b < 1e-8, "{a:e} {b:e}");
}

#[test]
fn backward_limit_is_invariant_over_periods() {
    let k = make_age_time(0.5, 1.0, 1.0, 1.0).unwrap();
    let ph = solve_phase(&k, &PhaseSettings::default()).unwrap();
    let phi = 0.35;
    let limit = nu_infty(&ph.rho, &k, phi, 40.0, 0.01).unwrap();
    let start = InitialLaw::from_distribution(limit.law.clone()).unwrap();
    let sol = solve_renewal(&k, &start, phi, phi + 5.0, 1e-3).unwrap();
    for n in 1..=5 {
        let law = sol.law_backward(phi + n as f64).unwrap();
        let d = tv_distance(&law, &limit.law);
        assert!(d <= 1e-4 + limit.law.tail_bound(), "n = {n}: {d:e}");
    }
}

#[test]
fn hazard_pairing_gives_rho_on_several_phases() {
    let k = make_age_time(0.7, 0.8, 1.5, 2.0).unwrap();
    let ph = solve_phase(&k, &PhaseSettings::default()).unwrap();
    for i in 0..6 {
        let phi = 0.25 * i as f64;
        let nu = nu_infty(&ph.rho, &k, phi, 40.0, 0.005).unwrap();
        assert!((hazard_pairing(&nu, &k) - ph.rho.eval(phi)).abs() < 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_kernels_are_valid_and_rho_is_bounded(
        a in 0.2f64..1.5,
        b in 0.1f64..2.0,
        period in 0.5f64..2.0,
        d in 0.2f64..3.0,
    ) {
        let k = make_age_time(a, b, period, d).unwrap();
        prop_assert!(verify_kernel(&k, 200, 1e-8).is_ok());
        let settings = PhaseSettings { m: 128, ..PhaseSettings::default() };
        let ph = solve_phase(&k, &settings).unwrap();
        prop_assert!(ph.rho.min() >= k.lambda_min() - 1e-9);
        prop_assert!(ph.rho.max() <= k.lambda_max() + 1e-9);
        prop_assert!((ph.pi.integral() - 1.0).abs() < 1e-10);
    }
}
