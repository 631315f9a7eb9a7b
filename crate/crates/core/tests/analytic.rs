mod common;

use common::*;
use proptest::prelude::*;
use tandem_core::analytic::{self, Sign};
use tandem_core::SystemParams;

fn fig_instance(gamma: f64, theta: f64, buffer: usize) -> SystemParams {
    SystemParams::new([[10.0, 2.0], [2.0, 13.0]], gamma, theta, buffer).unwrap()
}

#[test]
fn gains_match_dense_solve_on_reference_instance() {
    let p = fig_instance(1.0, 1.0, 5);
    let dense = dense_threshold_gains(&p);
    let gains = analytic::gains(&p);
    assert_eq!(gains.len(), 7);
    for (a, b) in gains.iter().zip(&dense) {
        assert!(rel_err(*a, *b) < 1e-12, "{a} vs {b}");
    }
    // frozen from the dense oracle
    assert!((dense[0] - 20.0 / 3.0).abs() < 1e-12);
}

#[test]
fn interior_threshold_matches_exhaustive_argmax() {
    let p = fig_instance(1.2, 1.0, 12);
    let n = analytic::optimal_threshold(&p);
    assert_eq!(n, exhaustive_threshold(&p));
}

#[test]
fn tau_two_matches_closed_form() {
    let p = fig_instance(1.5, 2.0, 12);
    let (s1, s2, mu11, th) = (p.team_rate1(), p.team_rate2(), p.mu11(), p.theta());
    let d = s2 - p.mu22();
    let tau2 = -s2 * s1 * d + s2 * s2 * mu11 - th * s1 * d;
    assert_eq!(analytic::tau_sign(2, &p).unwrap().sign, Sign::of(tau2));
    assert_eq!(Sign::of(tau2), Sign::of(tau_direct(2, &p)));
}

#[test]
fn direct_closed_forms_agree_with_frozen_products() {
    let p = fig_instance(1.0, 2.0, 12);
    assert_eq!(f_direct(1, 4, &p), 3315.0);
    assert_eq!(alpha_direct(3, &p), 25.0);
    assert_eq!(analytic::f_product(1, 4, &p).unwrap(), 3315.0);
    assert_eq!(analytic::alpha(3, &p).unwrap(), 25.0);
}

#[test]
fn no_cross_service_means_full_buffer() {
    let p = SystemParams::new([[10.0, 0.0], [2.0, 13.0]], 1.0, 1.0, 8).unwrap();
    assert!(analytic::tau_signs(&p).iter().all(|t| t.sign.is_nonnegative()));
    assert_eq!(analytic::optimal_threshold(&p), 10);
    let td = SystemParams::task_dependent([[10.0, 0.0], [2.0, 13.0]], 1.4, 1.0, 1.0, 8).unwrap();
    assert_eq!(analytic::td_threshold(&td), 10);
    assert!(analytic::td_theta_bound(&td).is_infinite());
}

#[test]
fn td_theta_bound_reference_value() {
    let p = SystemParams::task_dependent([[10.0, 2.0], [2.0, 13.0]], 1.3, 1.1, 1.0, 12).unwrap();
    let (s1, s2) = (1.3 * 12.0, 1.1 * 15.0);
    let d = s2 - 13.0;
    let expected = s2 * (s2 * 10.0 - s1 * d) / (s1 * d);
    assert!((analytic::td_theta_bound(&p) - expected).abs() < 1e-12 * expected.abs());
}

#[test]
fn td_grid_matches_exhaustive_argmax() {
    for i in 0..=10 {
        for k in 0..=10 {
            let (g1, g2) = (1.0 + i as f64 / 10.0, 1.0 + k as f64 / 10.0);
            let p = SystemParams::task_dependent([[10.0, 2.0], [2.0, 13.0]], g1, g2, 2.0, 12).unwrap();
            let n = analytic::td_threshold(&p);
            let dense = dense_threshold_gains(&p);
            let best = dense.iter().cloned().fold(f64::MIN, f64::max);
            assert!(dense[n - 1] >= best * (1.0 - 1e-10), "g1={g1} g2={g2} N={n}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gains_match_dense_solve(p in uniform_params(0.0..10.0, 30)) {
        let dense = dense_threshold_gains(&p);
        for (n, g) in analytic::gains(&p).iter().enumerate() {
            prop_assert!(rel_err(*g, dense[n]) <= 1e-9, "n={} {} vs {}", n + 1, g, dense[n]);
        }
    }

    #[test]
    fn sign_identity_and_prefix(p in td_params(0.0..10.0, 30)) {
        let gains = analytic::gains(&p);
        let signs = analytic::tau_signs(&p);
        prop_assert_eq!(signs[0].sign, Sign::Positive);
        let mut seen_negative = false;
        for n in 2..=p.max_state() {
            let s = signs[n - 1].sign;
            if seen_negative {
                prop_assert_eq!(s, Sign::Negative, "sign returns after a negative at n={}", n);
            }
            seen_negative |= s == Sign::Negative;
            let diff = gains[n - 1] - gains[n - 2];
            if diff.abs() > 1e-9 * gains[n - 1] {
                prop_assert_eq!(Sign::of(diff), s, "n={}", n);
            }
        }
    }

    #[test]
    fn gains_rise_to_threshold_then_fall(p in td_params(0.0..10.0, 60)) {
        let g = analytic::gains(&p);
        let n = analytic::optimal_threshold(&p);
        let tol = 1e-12 * g[n - 1];
        for k in 1..n {
            prop_assert!(g[k] >= g[k - 1] - tol);
        }
        for k in n..g.len() {
            prop_assert!(g[k] <= g[k - 1] + tol);
        }
        if n < g.len() {
            prop_assert!(g[n] < g[n - 1] + tol);
        }
    }

    #[test]
    fn tau_sign_matches_direct_formula(p in moderate_params(10)) {
        for n in 2..=p.max_state() {
            let direct = tau_direct(n, &p);
            let scale = (beta_direct(n, &p) * delta_direct(n - 1, &p)).abs();
            if direct.abs() > 1e-9 * scale {
                prop_assert_eq!(analytic::tau_sign(n, &p).unwrap().sign, Sign::of(direct), "n={}", n);
            }
        }
    }

    #[test]
    fn gain_equals_beta_over_delta(p in moderate_params(10)) {
        for n in 2..=p.max_state() {
            let g = beta_direct(n, &p) / delta_direct(n, &p);
            prop_assert!(rel_err(analytic::gain(n, &p).unwrap(), g) < 1e-9);
        }
    }

    #[test]
    fn product_recursions_match_direct(p in moderate_params(18)) {
        for n in 1..=p.max_state().min(20) {
            for k in 1..=n {
                prop_assert!(rel_err(analytic::f_product(k, n, &p).unwrap(), f_direct(k, n, &p)) < 1e-12);
            }
            prop_assert!(rel_err(analytic::alpha(n, &p).unwrap(), alpha_direct(n, &p)) < 1e-12);
            if n >= 2 {
                prop_assert!(rel_err(analytic::log_alpha(n, &p).unwrap().exp(), alpha_direct(n, &p)) < 1e-10);
            }
        }
    }

    #[test]
    fn epsilon_nonnegative(p in uniform_params(0.0..10.0, 40)) {
        for n in 2..=p.max_state() {
            prop_assert!(analytic::epsilon_prime(n, &p).unwrap() >= 0.0);
        }
    }

    #[test]
    fn threshold_non_increasing_in_gamma(p in uniform_params(0.0..10.0, 40)) {
        let mut last = usize::MAX;
        for k in 0..=20 {
            let n = analytic::optimal_threshold(&p.with_gamma(1.0 + k as f64 / 20.0).unwrap());
            prop_assert!(n <= last, "gamma step {}", k);
            last = n;
        }
    }

    #[test]
    fn threshold_non_increasing_in_theta(p in uniform_params(0.0..10.0, 40)) {
        let zero = p.with_theta(0.0).unwrap();
        prop_assert_eq!(analytic::optimal_threshold(&zero), analytic::no_abandonment_threshold(&zero));
        let mut last = usize::MAX;
        for k in 0..=20 {
            let n = analytic::optimal_threshold(&p.with_theta(k as f64 / 2.0).unwrap());
            prop_assert!(n <= last, "theta step {}", k);
            last = n;
        }
    }

    #[test]
    fn bounds_imply_expedite(p in uniform_params(0.0..10.0, 60), td in td_params(0.01..10.0, 60)) {
        let strict = analytic::gamma_bound_strict(&p);
        prop_assert!(strict <= 2.0 + 1e-12);
        prop_assert!(strict <= analytic::gamma_bound_simple(&p) + 1e-12);
        if p.gamma1() > strict {
            prop_assert_eq!(analytic::optimal_threshold(&p), 1);
        }
        let b = analytic::theta_bounds(&p);
        if p.theta() > b.strict {
            prop_assert_eq!(analytic::optimal_threshold(&p), 1);
        }
        if td.theta() > analytic::td_theta_bound(&td) {
            prop_assert_eq!(analytic::td_threshold(&td), 1);
        }
        prop_assert_eq!(analytic::optimal_threshold(&p.with_gamma(2.0).unwrap()), 1);
    }

    #[test]
    fn uniform_td_threshold_reduces(p in uniform_params(0.0..10.0, 40)) {
        prop_assert_eq!(analytic::td_threshold(&p), analytic::optimal_threshold(&p));
        let b = analytic::theta_bounds(&p);
        prop_assert_eq!(analytic::td_theta_bound(&p).to_bits(), b.strict.to_bits());
    }

    #[test]
    fn lemma_three_alpha_domination(p in uniform_params(0.01..10.0, 10)) {
        let n = analytic::optimal_threshold(&p);
        for s in 2..n {
            let lhs = analytic::log_alpha(n, &p).unwrap();
            let rhs = (n - s) as f64 * p.mu11().ln() + analytic::log_alpha(s, &p).unwrap();
            prop_assert!(lhs >= rhs - 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn expedite_gain_constant_in_theta(p in uniform_params(0.0..10.0, 20), t in 0.0..10.0f64) {
        let q = p.with_theta(t).unwrap();
        prop_assert_eq!(analytic::gain(1, &p).unwrap().to_bits(), analytic::gain(1, &q).unwrap().to_bits());
    }

    #[test]
    fn gains_and_positive_gaps_shrink_with_theta(p in uniform_params(0.0..10.0, 40)) {
        let grid: Vec<f64> = (0..20).map(|k| 10.0 * k as f64 / 19.0).collect();
        let curves: Vec<Vec<f64>> = grid.iter().map(|&t| analytic::gains(&p.with_theta(t).unwrap())).collect();
        let tol = 1e-12 * curves[0].iter().cloned().fold(0.0, f64::max);
        for n in 1..=p.max_state() {
            for w in curves.windows(2) {
                prop_assert!(w[1][n - 1] <= w[0][n - 1] + tol, "g_{} rose", n);
            }
        }
        for n in 2..=p.max_state() {
            let gaps: Vec<f64> = curves.iter().map(|g| g[n - 1] - g[n - 2]).collect();
            for w in gaps.windows(2) {
                if w[0] >= 0.0 {
                    prop_assert!(w[1] <= w[0] + tol, "positive gap at n={} rose", n);
                }
            }
            let turned = gaps.iter().position(|&d| d < -tol);
            if let Some(k) = turned {
                prop_assert!(gaps[k..].iter().all(|&d| d <= tol), "gap at n={} turned positive again", n);
            }
        }
    }
}
