//! Closed-form throughput of the threshold rules `d_n`, the sign sequence
//! that locates the best threshold, and the parameter bounds under which the
//! expedite rule `d_1` is optimal.
//!
//! Everything here works with the team rates `gamma1 * sigma1` and
//! `gamma2 * sigma2`, so the same code covers uniform synergy
//! (`gamma1 == gamma2`) and task-dependent synergy.
//!
//! The numerator/denominator form of `g_n` contains `mu11^(n-1)` and
//! products of `n-1` death rates, which overflow `f64` for rates in the
//! hundreds and buffers near 100. Gains are therefore evaluated from the
//! birth-death ratio recursion in log space, and the sign sequence from a
//! linear recursion whose state vector is renormalized at every step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::birth_death::{self, log_sum_exp, BirthDeathError};
use crate::model::{GeneralistParams, SystemParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("index {index} outside {lo}..={hi}")]
    OutOfRange { index: usize, lo: usize, hi: usize },
    #[error(transparent)]
    BirthDeath(#[from] BirthDeathError),
}

/// Relative size below which a recursion value counts as an exact zero.
pub const TAU_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    pub fn of(x: f64) -> Sign {
        if x > 0.0 {
            Sign::Positive
        } else if x < 0.0 {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }

    pub fn is_nonnegative(self) -> bool {
        self != Sign::Negative
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Negative => '-',
            Sign::Zero => '0',
            Sign::Positive => '+',
        }
    }
}

/// Sign of `tau'(n)` plus its value under the running positive rescale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauValue {
    pub sign: Sign,
    pub scaled: f64,
}

fn check_range(index: usize, lo: usize, hi: usize) -> Result<(), AnalyticError> {
    if index < lo || index > hi {
        Err(AnalyticError::OutOfRange { index, lo, hi })
    } else {
        Ok(())
    }
}

/// Death rate `mu22 + (j - 1) * theta` of state `j` while servers are split.
fn split_death(params: &SystemParams, j: usize) -> f64 {
    params.mu22() + (j as f64 - 1.0) * params.theta()
}

/// `f(k, n) = prod_{j=k}^{n-1} [mu22 + (j-1) theta]`; `f(n, n) = 1`.
///
/// Direct product; overflows for long ranges. See [`log_f_product`].
pub fn f_product(k: usize, n: usize, params: &SystemParams) -> Result<f64, AnalyticError> {
    check_range(k, 1, n)?;
    Ok((k..n).map(|j| split_death(params, j)).product())
}

/// `ln f(k, n)`; `-inf` when a factor vanishes.
pub fn log_f_product(k: usize, n: usize, params: &SystemParams) -> Result<f64, AnalyticError> {
    check_range(k, 1, n)?;
    Ok((k..n).map(|j| split_death(params, j).ln()).sum())
}

/// `alpha(n) = sum_{k=2}^{n} mu11^(k-2) f(k, n)`, via
/// `alpha(n) = [mu22 + (n-2) theta] alpha(n-1) + mu11^(n-2)`.
pub fn alpha(n: usize, params: &SystemParams) -> Result<f64, AnalyticError> {
    check_range(n, 1, usize::MAX)?;
    let mut a = 0.0;
    let mut power = 1.0;
    for m in 2..=n {
        a = split_death(params, m - 1) * a + power;
        power *= params.mu11();
    }
    Ok(a)
}

/// `ln alpha(n)`, with the same recursion carried out in log space.
pub fn log_alpha(n: usize, params: &SystemParams) -> Result<f64, AnalyticError> {
    check_range(n, 1, usize::MAX)?;
    let ln_mu11 = params.mu11().ln();
    let mut la = f64::NEG_INFINITY;
    for m in 2..=n {
        let ln_power = if m == 2 { 0.0 } else { (m as f64 - 2.0) * ln_mu11 };
        la = log_sum_exp([split_death(params, m - 1).ln() + la, ln_power]);
    }
    Ok(la)
}

/// Stationary law of the recurrent states `0..=n` under `d_n`.
pub fn threshold_stationary(n: usize, params: &SystemParams) -> Result<Vec<f64>, AnalyticError> {
    check_range(n, 1, params.max_state())?;
    let mut up = Vec::with_capacity(n);
    let mut down = Vec::with_capacity(n);
    up.push(params.team_rate1());
    up.extend(std::iter::repeat_n(params.mu11(), n - 1));
    down.extend((1..n).map(|i| split_death(params, i)));
    down.push(params.team_rate2() + (n as f64 - 1.0) * params.theta());
    Ok(birth_death::stationary(&up, &down)?)
}

/// Long-run average throughput `g_n` of the threshold rule `d_n`.
pub fn gain(n: usize, params: &SystemParams) -> Result<f64, AnalyticError> {
    let pi = threshold_stationary(n, params)?;
    let split: f64 = pi[1..n].iter().sum();
    Ok(params.mu22() * split + params.team_rate2() * pi[n])
}

/// `g_1, ..., g_{B+2}`.
pub fn gains(params: &SystemParams) -> Vec<f64> {
    (1..=params.max_state())
        .map(|n| gain(n, params).expect("threshold chain is unichain for valid params"))
        .collect()
}

/// Expedite throughput `g_1 = S1 S2 / (S1 + S2)` with team rates `S1`, `S2`.
pub fn expedite_gain(params: &SystemParams) -> f64 {
    let (s1, s2) = (params.team_rate1(), params.team_rate2());
    s1 * s2 / (s1 + s2)
}

/// Iterates the sign recursion `tau'(n+1) = [mu22 + (n-1) theta] tau'(n) - eps'(n)`.
///
/// The state `(tau'(n), f(1,n-1), alpha(n-1), mu11^(n-2))` evolves linearly,
/// so dividing the whole vector by a positive number each step leaves every
/// sign intact.
struct TauScan<'a> {
    params: &'a SystemParams,
    n: usize,
    tau: f64,
    f1: f64,
    alpha_prev: f64,
    power: f64,
    sign: Sign,
}

impl<'a> TauScan<'a> {
    fn new(params: &'a SystemParams) -> Self {
        TauScan { params, n: 1, tau: 1.0, f1: 1.0, alpha_prev: 0.0, power: 1.0, sign: Sign::Positive }
    }

    fn current(&self) -> TauValue {
        TauValue { sign: self.sign, scaled: self.tau }
    }

    /// Moves from `tau'(n)` to `tau'(n+1)`.
    fn advance(&mut self) {
        let p = self.params;
        let (s1, s2, mu11, mu22, theta) = (p.team_rate1(), p.team_rate2(), p.mu11(), p.mu22(), p.theta());
        let d = s2 - mu22;
        if self.n == 1 {
            // tau'(2) in closed form; state becomes (tau'(2), f(1,1), alpha(1), mu11^0).
            let terms = [-s2 * s1 * d, s2 * s2 * mu11, -theta * s1 * d];
            let value: f64 = terms.iter().sum();
            let mag: f64 = terms.iter().map(|t| t.abs()).sum();
            self.n = 2;
            self.tau = value;
            self.f1 = 1.0;
            self.alpha_prev = 0.0;
            self.power = 1.0;
            self.sign = classify(value, mag);
            self.rescale();
            return;
        }
        let n = self.n as f64;
        let a = mu22 + (n - 1.0) * theta;
        let b = mu22 + (n - 2.0) * theta;
        let (f1, al, m) = (self.f1, self.alpha_prev, self.power);
        let eps = theta * d * (d + theta) * mu22 * f1
            + theta * s1 * mu11 * m * d
            + theta * a * b * s1 * d * al
            + theta * a * b * d * f1
            + s1 * d * m * theta * a
            + theta * d * mu11 * (s2 * f1 + s1 * d * al);
        let head = a * self.tau;
        let value = head - eps;
        self.sign = classify(value, head.abs() + eps.abs());
        self.tau = value;
        // advance to (f(1,n), alpha(n), mu11^(n-1))
        self.alpha_prev = b * al + m;
        self.f1 = f1 * b;
        self.power = m * mu11;
        self.n += 1;
        self.rescale();
    }

    fn rescale(&mut self) {
        let s = self.tau.abs().max(self.f1.abs()).max(self.alpha_prev.abs()).max(self.power.abs());
        if s > 0.0 && s.is_finite() {
            self.tau /= s;
            self.f1 /= s;
            self.alpha_prev /= s;
            self.power /= s;
        }
    }
}

fn classify(value: f64, magnitude: f64) -> Sign {
    if value.abs() <= TAU_ZERO_TOL * magnitude {
        Sign::Zero
    } else {
        Sign::of(value)
    }
}

/// Sign of `tau'(n)`, which matches the sign of `g_n - g_{n-1}` for `n >= 2`.
pub fn tau_sign(n: usize, params: &SystemParams) -> Result<TauValue, AnalyticError> {
    check_range(n, 1, params.max_state())?;
    let mut scan = TauScan::new(params);
    while scan.n < n {
        scan.advance();
    }
    Ok(scan.current())
}

/// `tau'(1), ..., tau'(B+2)` in one pass.
pub fn tau_signs(params: &SystemParams) -> Vec<TauValue> {
    let mut scan = TauScan::new(params);
    let mut out = vec![scan.current()];
    while scan.n < params.max_state() {
        scan.advance();
        out.push(scan.current());
    }
    out
}

/// `N = max{n : tau'(n) >= 0}`, found by scanning forward to the first
/// negative sign (signs never turn positive again after a negative one).
///
/// With `gamma1 != gamma2` this is the task-dependent threshold.
pub fn optimal_threshold(params: &SystemParams) -> usize {
    let mut scan = TauScan::new(params);
    while scan.n < params.max_state() {
        scan.advance();
        if scan.sign == Sign::Negative {
            return scan.n - 1;
        }
    }
    params.max_state()
}

/// Threshold for task-dependent synergy; identical scan on the station
/// team rates `gamma_j * sigma_j`.
pub fn td_threshold(params: &SystemParams) -> usize {
    optimal_threshold(params)
}

/// Direct evaluation of `eps'(n)` (n >= 2). Overflows for long buffers.
pub fn epsilon_prime(n: usize, params: &SystemParams) -> Result<f64, AnalyticError> {
    check_range(n, 2, usize::MAX)?;
    let (s1, s2, mu11, mu22, theta) =
        (params.team_rate1(), params.team_rate2(), params.mu11(), params.mu22(), params.theta());
    let d = s2 - mu22;
    let nf = n as f64;
    let a = mu22 + (nf - 1.0) * theta;
    let b = mu22 + (nf - 2.0) * theta;
    let f1 = f_product(1, n - 1, params)?;
    let al = alpha(n - 1, params)?;
    let m = mu11.powi(n as i32 - 2);
    Ok(theta * d * (d + theta) * mu22 * f1
        + theta * s1 * mu11 * m * d
        + theta * a * b * s1 * d * al
        + theta * a * b * d * f1
        + s1 * d * m * theta * a
        + theta * d * mu11 * (s2 * f1 + s1 * d * al))
}

/// Larger root of the quadratic whose sign decides `tau'(2)`: any `gamma`
/// strictly above it makes the expedite rule optimal.
pub fn gamma_bound_strict(params: &SystemParams) -> f64 {
    let (sig1, sig2, theta) = (params.sigma1(), params.sigma2(), params.theta());
    let c = sig2 + params.specialization() / sig1 - theta;
    (c + (c * c + 4.0 * theta * params.mu22()).sqrt()) / (2.0 * sig2)
}

/// `1 + (mu11 mu22 - mu21 mu12) / (sigma1 sigma2)`: for `gamma` at or above
/// this value the expedite rule is optimal whatever the abandonment rate.
pub fn gamma_bound_simple(params: &SystemParams) -> f64 {
    1.0 + params.specialization() / (params.sigma1() * params.sigma2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaBounds {
    /// Abandonment rate above which `N = 1` at this instance's synergy.
    pub strict: f64,
    /// Abandonment rate above which `N = 1` for every synergy level.
    pub simple: f64,
}

/// Abandonment-rate thresholds for the expedite rule; `+inf` when no
/// abandonment rate forces it (station 2's team is no faster than server 2
/// alone, so the full buffer is always used).
pub fn theta_bounds(params: &SystemParams) -> ThetaBounds {
    let simple = if params.mu12() == 0.0 {
        f64::INFINITY
    } else {
        params.sigma2() * params.specialization() / (params.sigma1() * params.mu12())
    };
    ThetaBounds { strict: td_theta_bound(params), simple }
}

/// Abandonment-rate threshold with station-specific team rates.
pub fn td_theta_bound(params: &SystemParams) -> f64 {
    let (s1, s2, mu11, mu22) = (params.team_rate1(), params.team_rate2(), params.mu11(), params.mu22());
    let d = s2 - mu22;
    if d <= 0.0 {
        return f64::INFINITY;
    }
    s2 * (s2 * mu11 - s1 * d) / (s1 * d)
}

/// Optimal threshold without abandonment: the full buffer when
/// `gamma <= mu11/sigma1 + mu22/sigma2`, otherwise the expedite rule.
/// Uniform synergy only (uses `gamma1`).
pub fn no_abandonment_threshold(params: &SystemParams) -> usize {
    let split_value = params.mu11() / params.sigma1() + params.mu22() / params.sigma2();
    if params.gamma1() <= split_value {
        params.max_state()
    } else {
        1
    }
}

/// Throughput of the expedite policy with generalist servers:
/// `sum(mu) / sum_j 1 / (delta_j gamma_j)`.
pub fn expedite_gain_generalist(gp: &GeneralistParams) -> f64 {
    let speed: f64 = gp.mu.iter().sum();
    let work: f64 = gp.delta.iter().zip(&gp.gammas).map(|(d, g)| 1.0 / (d * g)).sum();
    speed / work
}

/// Everything the closed forms say about one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticProfile {
    pub gains: Vec<f64>,
    pub tau_signs: Vec<Sign>,
    pub threshold: usize,
    pub gamma_bound_strict: f64,
    pub gamma_bound_simple: f64,
    pub theta_bound_strict: f64,
    pub theta_bound_simple: f64,
}

impl AnalyticProfile {
    pub fn optimal_gain(&self) -> f64 {
        self.gains[self.threshold - 1]
    }

    pub fn expedite_gain(&self) -> f64 {
        self.gains[0]
    }
}

pub fn profile(params: &SystemParams) -> AnalyticProfile {
    let tb = theta_bounds(params);
    AnalyticProfile {
        gains: gains(params),
        tau_signs: tau_signs(params).into_iter().map(|t| t.sign).collect(),
        threshold: optimal_threshold(params),
        gamma_bound_strict: gamma_bound_strict(params),
        gamma_bound_simple: gamma_bound_simple(params),
        theta_bound_strict: tb.strict,
        theta_bound_simple: tb.simple,
    }
}
