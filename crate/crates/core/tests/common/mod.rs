//! Test-side oracles, written independently of the library's numerics.
#![allow(dead_code)]

use proptest::prelude::*;
use tandem_core::{canonicalize, Action, SystemParams};

/// `(up, down, reward)` rates of state `s` under `a`, read off the kernel
/// definitions.
pub fn raw_rates(p: &SystemParams, s: usize, a: Action) -> (f64, f64, f64) {
    let top = p.max_state();
    let (s1, s2) = (p.gamma1() * (p.mu11() + p.mu21()), p.gamma2() * (p.mu12() + p.mu22()));
    let th = p.theta();
    let sf = s as f64;
    let (up, service, waiting) = match a {
        Action::A11 => (s1, 0.0, sf),
        Action::A12 => (p.mu11(), p.mu22(), sf - 1.0),
        Action::A21 => (p.mu21(), p.mu12(), sf - 1.0),
        Action::A22 => (0.0, s2, sf - 1.0),
    };
    let up = if s < top { up } else { 0.0 };
    if s == 0 {
        (up, 0.0, 0.0)
    } else {
        (up, service + waiting * th, service)
    }
}

pub fn threshold_actions(n: usize, p: &SystemParams) -> Vec<Action> {
    (0..=p.max_state())
        .map(|s| match s {
            0 => Action::A11,
            s if s < n => Action::A12,
            _ => Action::A22,
        })
        .collect()
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap()).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        assert!(a[c][c] != 0.0, "singular oracle system");
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

/// Stationary law of the CTMC under `rule` from `pi Q = 0`, `sum pi = 1`,
/// solved densely over all states.
pub fn dense_stationary(p: &SystemParams, rule: &[Action]) -> Vec<f64> {
    let n = p.max_state() + 1;
    let mut qt = vec![vec![0.0; n]; n];
    for s in 0..n {
        let (up, down, _) = raw_rates(p, s, rule[s]);
        if s + 1 < n {
            qt[s + 1][s] += up;
        }
        if s > 0 {
            qt[s - 1][s] += down;
        }
        qt[s][s] -= up + down;
    }
    let mut b = vec![0.0; n];
    qt[0] = vec![1.0; n];
    b[0] = 1.0;
    solve(qt, b)
}

pub fn dense_gain(p: &SystemParams, rule: &[Action]) -> f64 {
    let pi = dense_stationary(p, rule);
    pi.iter().enumerate().map(|(s, x)| x * raw_rates(p, s, rule[s]).2).sum()
}

/// Gains of `d_1, ..., d_{B+2}` by dense solves.
pub fn dense_threshold_gains(p: &SystemParams) -> Vec<f64> {
    (1..=p.max_state()).map(|n| dense_gain(p, &threshold_actions(n, p))).collect()
}

/// Largest maximizer of the dense gains (ties within `1e-12` relative).
pub fn exhaustive_threshold(p: &SystemParams) -> usize {
    let g = dense_threshold_gains(p);
    let best = g.iter().cloned().fold(f64::MIN, f64::max);
    g.iter().rposition(|&x| x >= best * (1.0 - 1e-12)).unwrap() + 1
}

/// `prod_{j=k}^{n-1} (mu22 + (j-1) theta)`.
pub fn f_direct(k: usize, n: usize, p: &SystemParams) -> f64 {
    (k..n).map(|j| p.mu22() + (j as f64 - 1.0) * p.theta()).product()
}

/// `sum_{k=2}^{n} mu11^(k-2) f(k, n)`.
pub fn alpha_direct(n: usize, p: &SystemParams) -> f64 {
    (2..=n).map(|k| p.mu11().powi(k as i32 - 2) * f_direct(k, n, p)).sum()
}

pub fn delta_direct(n: usize, p: &SystemParams) -> f64 {
    let (s1, s2) = (p.team_rate1(), p.team_rate2());
    (s2 + (n as f64 - 1.0) * p.theta()) * (f_direct(1, n, p) + s1 * alpha_direct(n, p)) + s1 * p.mu11().powi(n as i32 - 1)
}

pub fn beta_direct(n: usize, p: &SystemParams) -> f64 {
    let (s1, s2) = (p.team_rate1(), p.team_rate2());
    (s2 + (n as f64 - 1.0) * p.theta()) * s1 * p.mu22() * alpha_direct(n, p) + s1 * s2 * p.mu11().powi(n as i32 - 1)
}

/// Numerator of `g_n - g_{n-1}` over the positive `Delta(n) Delta(n-1)`.
pub fn tau_direct(n: usize, p: &SystemParams) -> f64 {
    beta_direct(n, p) * delta_direct(n - 1, p) - beta_direct(n - 1, p) * delta_direct(n, p)
}

pub fn params_from(m: [f64; 4], g1: f64, g2: f64, theta: f64, buffer: usize) -> Option<SystemParams> {
    canonicalize([[m[0], m[1]], [m[2], m[3]]], g1, g2, theta, buffer).ok()
}

/// Wide-range uniform-synergy instances.
pub fn uniform_params(theta: std::ops::Range<f64>, max_buffer: usize) -> impl Strategy<Value = SystemParams> {
    (prop::array::uniform4(0.0..400.0f64), 1.0..2.0f64, theta, 0..=max_buffer)
        .prop_filter_map("invalid rates", |(m, g, t, b)| params_from(m, g, g, t, b))
}

/// Wide-range task-dependent instances.
pub fn td_params(theta: std::ops::Range<f64>, max_buffer: usize) -> impl Strategy<Value = SystemParams> {
    (prop::array::uniform4(0.0..400.0f64), 1.0..2.0f64, 1.0..2.0f64, theta, 0..=max_buffer)
        .prop_filter_map("invalid rates", |(m, g1, g2, t, b)| params_from(m, g1, g2, t, b))
}

/// Moderate rates, so direct products and powers stay well inside f64.
pub fn moderate_params(max_buffer: usize) -> impl Strategy<Value = SystemParams> {
    (prop::array::uniform4(0.5..20.0f64), 1.0..2.0f64, 1.0..2.0f64, 0.01..3.0f64, 0..=max_buffer)
        .prop_filter_map("invalid rates", |(m, g1, g2, t, b)| params_from(m, g1, g2, t, b))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
