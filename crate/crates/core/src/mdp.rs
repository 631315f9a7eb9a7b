//! The uniformized average-reward MDP on states `0..=B+2`.
//!
//! The state counts customers that finished station 1 and are waiting for,
//! or receiving, service at station 2 (including one blocked at station 1).
//! Every action induces a birth-death kernel, so each row has at most three
//! nonzero entries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{self, AnalyticError};
use crate::birth_death::{self, log_sum_exp, BirthDeathError};
use crate::model::{Action, DecisionRule, SystemParams, ThresholdPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("uniformization constant {q} is below the total rate bound {bound}")]
    RateBound { q: f64, bound: f64 },
    #[error("policy evaluation needs theta > 0 (got {0})")]
    NoAbandonment(f64),
    #[error("decision rule has {got} actions, model has {expected} states")]
    RuleLength { got: usize, expected: usize },
    #[error("evaluation system is singular (rule is not unichain)")]
    Singular,
    #[error("policy iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    BirthDeath(#[from] BirthDeathError),
}

/// Continuous-time event rates in state `s` under action `a`.
///
/// `service` is the station-2 completion rate (the reward rate) and
/// `abandon` the total reneging rate of the customers not in service.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRates {
    pub up: f64,
    pub service: f64,
    pub abandon: f64,
}

impl EventRates {
    pub fn down(&self) -> f64 {
        self.service + self.abandon
    }

    pub fn total(&self) -> f64 {
        self.up + self.service + self.abandon
    }
}

pub fn event_rates(params: &SystemParams, state: usize, action: Action) -> EventRates {
    let top = params.max_state();
    let s = state as f64;
    let theta = params.theta();
    let (arrive, server2) = match action {
        Action::A11 => (params.team_rate1(), 0.0),
        Action::A12 => (params.mu11(), params.mu22()),
        Action::A21 => (params.mu21(), params.mu12()),
        Action::A22 => (0.0, params.team_rate2()),
    };
    let up = if state < top { arrive } else { 0.0 };
    if state == 0 {
        return EventRates { up, service: 0.0, abandon: 0.0 };
    }
    // With nobody at station 2 every customer there is waiting.
    let abandon = if action == Action::A11 { s * theta } else { (s - 1.0) * theta };
    EventRates { up, service: server2, abandon }
}

/// Smallest admissible uniformization constant.
pub fn rate_bound(params: &SystemParams) -> f64 {
    params.team_rate1() + params.team_rate2() + params.max_state() as f64 * params.theta()
}

/// One kernel row: probabilities of moving down, staying, and moving up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub down: f64,
    pub stay: f64,
    pub up: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpModel {
    params: SystemParams,
    q: f64,
    rows: Vec<[KernelRow; 4]>,
    rewards: Vec<[f64; 4]>,
}

impl MdpModel {
    /// Uniformizes at `q` (default: the rate bound).
    pub fn build(params: &SystemParams, q: Option<f64>) -> Result<Self, MdpError> {
        let bound = rate_bound(params);
        let q = q.unwrap_or(bound);
        if !(q >= bound) {
            return Err(MdpError::RateBound { q, bound });
        }
        let states = params.max_state() + 1;
        let mut rows = Vec::with_capacity(states);
        let mut rewards = Vec::with_capacity(states);
        for s in 0..states {
            let mut row = [KernelRow { down: 0.0, stay: 1.0, up: 0.0 }; 4];
            let mut reward = [0.0; 4];
            for a in Action::ALL {
                let r = event_rates(params, s, a);
                let up = r.up / q;
                let down = r.down() / q;
                row[a.index()] = KernelRow { down, stay: (1.0 - up - down).max(0.0), up };
                reward[a.index()] = r.service;
            }
            rows.push(row);
            rewards.push(reward);
        }
        Ok(MdpModel { params: *params, q, rows, rewards })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn states(&self) -> usize {
        self.rows.len()
    }

    pub fn reward(&self, state: usize, action: Action) -> f64 {
        self.rewards[state][action.index()]
    }

    pub fn row(&self, state: usize, action: Action) -> KernelRow {
        self.rows[state][action.index()]
    }

    /// `p(j | s, a)`.
    pub fn transition(&self, state: usize, action: Action, next: usize) -> f64 {
        let row = self.row(state, action);
        if next == state {
            row.stay
        } else if next + 1 == state {
            row.down
        } else if next == state + 1 {
            row.up
        } else {
            0.0
        }
    }

    /// `r(s, a) + sum_j p(j | s, a) h(j)`.
    pub fn lookahead(&self, state: usize, action: Action, bias: &[f64]) -> f64 {
        let row = self.row(state, action);
        let mut v = self.reward(state, action) + row.stay * bias[state];
        if state > 0 {
            v += row.down * bias[state - 1];
        }
        if state + 1 < bias.len() {
            v += row.up * bias[state + 1];
        }
        v
    }

    fn check_rule(&self, rule: &DecisionRule) -> Result<(), MdpError> {
        if rule.len() != self.states() {
            return Err(MdpError::RuleLength { got: rule.len(), expected: self.states() });
        }
        Ok(())
    }
}

/// Stationary law of the chain induced by `rule` (zeros on transient states).
pub fn stationary_distribution_rule(model: &MdpModel, rule: &DecisionRule) -> Result<Vec<f64>, MdpError> {
    model.check_rule(rule)?;
    let n = model.states();
    let up: Vec<f64> = (0..n - 1).map(|s| model.row(s, rule.action(s)).up).collect();
    let down: Vec<f64> = (1..n).map(|s| model.row(s, rule.action(s)).down).collect();
    Ok(birth_death::stationary(&up, &down)?)
}

/// Stationary law under `d_n`; states above `n` are transient.
pub fn stationary_distribution(model: &MdpModel, policy: &ThresholdPolicy) -> Result<Vec<f64>, MdpError> {
    stationary_distribution_rule(model, &policy.decision_rule())
}

/// Gain and bias (normalized by `h(0) = 0`) of a decision rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub gain: f64,
    pub bias: Vec<f64>,
}

/// Solves `r_d - g e + (P_d - I) h = 0` with `h(0) = 0` by dense Gaussian
/// elimination with partial pivoting.
pub fn evaluate_policy(model: &MdpModel, rule: &DecisionRule) -> Result<PolicyEvaluation, MdpError> {
    if model.params.theta() <= 0.0 {
        return Err(MdpError::NoAbandonment(model.params.theta()));
    }
    model.check_rule(rule)?;
    let n = model.states();
    // Unknowns: x[0] = g, x[s] = h(s) for s >= 1.
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for s in 0..n {
        let act = rule.action(s);
        let row = model.row(s, act);
        a[s][0] = -1.0;
        if s > 0 {
            a[s][s] += row.stay - 1.0;
            if s > 1 {
                a[s][s - 1] += row.down;
            }
        }
        if s + 1 < n {
            a[s][s + 1] += row.up;
        }
        b[s] = -model.reward(s, act);
    }
    let x = solve_dense(a, b).ok_or(MdpError::Singular)?;
    let mut bias = x.clone();
    bias[0] = 0.0;
    Ok(PolicyEvaluation { gain: x[0], bias })
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= 1e-13 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            let factor = a[r][col] / a[col][col];
            if factor != 0.0 {
                for c in col..n {
                    a[r][c] -= factor * a[col][c];
                }
                b[r] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - tail) / a[r][r];
    }
    Some(x)
}

/// Absolute tolerance for treating two lookahead values as tied.
pub fn tie_tolerance(model: &MdpModel) -> f64 {
    1e-12 * model.q()
}

/// Greedy rule with respect to `evaluation.bias`, keeping `incumbent`'s
/// action wherever it is within [`tie_tolerance`] of the best.
pub fn policy_improvement(model: &MdpModel, evaluation: &PolicyEvaluation, incumbent: &DecisionRule) -> DecisionRule {
    let tol = tie_tolerance(model);
    let h = &evaluation.bias;
    DecisionRule(
        (0..model.states())
            .map(|s| {
                let current = incumbent.action(s);
                let keep = model.lookahead(s, current, h);
                let (best, value) = Action::ALL
                    .iter()
                    .map(|&a| (a, model.lookahead(s, a, h)))
                    .fold((current, keep), |acc, x| if x.1 > acc.1 { x } else { acc });
                if value - keep <= tol {
                    current
                } else {
                    best
                }
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyIterationResult {
    pub rule: DecisionRule,
    pub gain: f64,
    /// Gain of each evaluated rule, starting with the initial one.
    pub gain_history: Vec<f64>,
}

impl PolicyIterationResult {
    pub fn iterations(&self) -> usize {
        self.gain_history.len()
    }
}

/// Unichain policy iteration; gives up after `B + 10` evaluations.
pub fn policy_iteration(model: &MdpModel, initial: &DecisionRule) -> Result<PolicyIterationResult, MdpError> {
    let cap = model.params.buffer() + 10;
    let mut rule = initial.clone();
    let mut history = Vec::new();
    for _ in 0..cap {
        let eval = evaluate_policy(model, &rule)?;
        history.push(eval.gain);
        let next = policy_improvement(model, &eval, &rule);
        if next == rule {
            return Ok(PolicyIterationResult { rule, gain: eval.gain, gain_history: history });
        }
        rule = next;
    }
    Err(MdpError::NoConvergence(cap))
}

/// One-step improvement margins `Gamma(s, a)` of a rule against every action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `gamma_matrix[s][a]`, actions in [`Action::ALL`] order.
    pub gamma_matrix: Vec<[f64; 4]>,
    pub min_value: f64,
    pub tolerance: f64,
    pub certified: bool,
    pub evaluation: PolicyEvaluation,
}

impl Certificate {
    pub fn gamma(&self, state: usize, action: Action) -> f64 {
        self.gamma_matrix[state][action.index()]
    }
}

/// Certificate tolerance: `1e-8` times the summed team rates.
pub fn certificate_tolerance(params: &SystemParams) -> f64 {
    1e-8 * (params.team_rate1() + params.team_rate2())
}

pub fn certificate_for_rule(model: &MdpModel, rule: &DecisionRule) -> Result<Certificate, MdpError> {
    let evaluation = evaluate_policy(model, rule)?;
    let h = &evaluation.bias;
    let gamma_matrix: Vec<[f64; 4]> = (0..model.states())
        .map(|s| {
            let own = model.lookahead(s, rule.action(s), h);
            Action::ALL.map(|a| own - model.lookahead(s, a, h))
        })
        .collect();
    let min_value = gamma_matrix.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    let tolerance = certificate_tolerance(&model.params);
    Ok(Certificate { gamma_matrix, min_value, tolerance, certified: min_value >= -tolerance, evaluation })
}

/// Certificate for the threshold rule `d_n`: nonnegative margins everywhere
/// mean no single-step deviation improves on it, so it is average-reward
/// optimal.
pub fn optimality_certificate(model: &MdpModel, policy: &ThresholdPolicy) -> Result<Certificate, MdpError> {
    certificate_for_rule(model, &policy.decision_rule())
}

/// Bias increments `h(s) - h(s-1)` of a threshold rule `d_n`.
///
/// `lower[s-1]` holds the increment at `s = 1..=n`, `upper[s-n]` at
/// `s = n..=B+2`; both cover `s = n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasIncrements {
    pub threshold: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BiasIncrements {
    /// Increment at state `s` (`1..=B+2`).
    pub fn at(&self, s: usize) -> f64 {
        if s <= self.threshold {
            self.lower[s - 1]
        } else {
            self.upper[s - self.threshold]
        }
    }
}

/// First bias value `h(1) = q g_n / S1`.
pub fn first_bias(params: &SystemParams, q: f64, n: usize) -> Result<f64, MdpError> {
    Ok(q * analytic::gain(n, params)? / params.team_rate1())
}

/// Bias increments from the gain: the telescoped evaluation equations
/// below the threshold (divides by powers of `mu11`; moderate buffers only)
/// and `q (S2 - g) / (S2 + (s-1) theta)` from the threshold up.
pub fn bias_increments_from_gain(params: &SystemParams, q: f64, n: usize) -> Result<BiasIncrements, MdpError> {
    let g = analytic::gain(n, params)?;
    let (s1, s2, mu11, mu22, theta) =
        (params.team_rate1(), params.team_rate2(), params.mu11(), params.mu22(), params.theta());
    let mut lower = Vec::with_capacity(n);
    for s in 1..=n {
        let mut acc = 0.0;
        for i in 0..s.saturating_sub(1) {
            acc += (g - mu22) / mu11.powi(i as i32 + 1) * analytic::f_product(s - i, s, params)?;
        }
        acc += g / (s1 * mu11.powi(s as i32 - 1)) * analytic::f_product(1, s, params)?;
        lower.push(q * acc);
    }
    let upper = (n..=params.max_state())
        .map(|s| q * (s2 - g) / (s2 + (s as f64 - 1.0) * theta))
        .collect();
    Ok(BiasIncrements { threshold: n, lower, upper })
}

fn ln_pow(x: f64, k: usize) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * x.ln()
    }
}

/// Bias increments from the fully expanded closed form, evaluated in log
/// space (every term is nonnegative), so it is safe for long buffers.
pub fn bias_increments_closed_form(params: &SystemParams, q: f64, n: usize) -> Result<BiasIncrements, MdpError> {
    let (s1, s2, mu11, mu22, theta) =
        (params.team_rate1(), params.team_rate2(), params.mu11(), params.mu22(), params.theta());
    let (ln_s1, ln_s2, ln_excess) = (s1.ln(), s2.ln(), (s2 - mu22).ln());
    let ln_top = (s2 + (n as f64 - 1.0) * theta).ln();
    let ln_f1n = analytic::log_f_product(1, n, params)?;
    let ln_alpha_n = analytic::log_alpha(n, params)?;
    let ln_delta = log_sum_exp([
        ln_top + log_sum_exp([ln_f1n, ln_s1 + ln_alpha_n]),
        ln_s1 + ln_pow(mu11, n - 1),
    ]);
    let ln_q = q.ln();

    let mut lower = Vec::with_capacity(n);
    for s in 1..=n {
        let ln_f1s = analytic::log_f_product(1, s, params)?;
        let mut inner = Vec::with_capacity(n - s);
        for k in s + 1..=n {
            inner.push(ln_pow(mu11, k - s - 1) + analytic::log_f_product(k, n, params)?);
        }
        let terms = [
            ln_s1 + ln_pow(mu11, n - s) + ln_excess + analytic::log_alpha(s, params)?,
            ln_top + mu22.ln() + log_sum_exp(inner) + ln_f1s,
            ln_s2 + ln_pow(mu11, n - s) + ln_f1s,
        ];
        lower.push((ln_q + log_sum_exp(terms) - ln_delta).exp());
    }
    let numer = ln_q + ln_top + log_sum_exp([ln_s2 + ln_f1n, ln_s1 + ln_excess + ln_alpha_n]);
    let upper = (n..=params.max_state())
        .map(|s| (numer - ln_delta - (s2 + (s as f64 - 1.0) * theta).ln()).exp())
        .collect();
    Ok(BiasIncrements { threshold: n, lower, upper })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SystemParams {
        SystemParams::new([[10.0, 2.0], [2.0, 13.0]], 1.2, 1.0, 5).unwrap()
    }

    #[test]
    fn rows_are_stochastic_and_literal() {
        let p = params();
        let m = MdpModel::build(&p, None).unwrap();
        assert_eq!(m.q(), 1.2 * 12.0 + 1.2 * 15.0 + 7.0);
        for s in 0..m.states() {
            for a in Action::ALL {
                let r = m.row(s, a);
                assert!(r.down >= 0.0 && r.up >= 0.0 && r.stay >= 0.0);
                assert!((r.down + r.stay + r.up - 1.0).abs() < 1e-12);
            }
        }
        let q = m.q();
        // state 0 under a22 never moves
        assert_eq!(m.row(0, Action::A22), KernelRow { down: 0.0, stay: 1.0, up: 0.0 });
        // a11 in the interior: team arrival up, s*theta down
        let r = m.row(3, Action::A11);
        assert!((r.up - 14.4 / q).abs() < 1e-15);
        assert!((r.down - 3.0 / q).abs() < 1e-15);
        // blocking at the top
        assert_eq!(m.row(7, Action::A12).up, 0.0);
        assert!((m.row(7, Action::A12).down - (13.0 + 6.0) / q).abs() < 1e-15);
        assert_eq!(m.reward(0, Action::A22), 0.0);
        assert_eq!(m.reward(2, Action::A22), 18.0);
        assert_eq!(m.reward(2, Action::A12), 13.0);
        assert_eq!(m.reward(2, Action::A21), 2.0);
        assert_eq!(m.reward(2, Action::A11), 0.0);
        assert_eq!(m.transition(3, Action::A11, 5), 0.0);
    }

    #[test]
    fn rejects_small_q() {
        let p = params();
        assert!(matches!(MdpModel::build(&p, Some(1.0)), Err(MdpError::RateBound { .. })));
        assert!(MdpModel::build(&p, Some(100.0)).is_ok());
    }

    #[test]
    fn two_state_stationary() {
        let p = SystemParams::new([[1.0, 0.0], [0.0, 1.0]], 1.0, 2.0, 3).unwrap();
        let m = MdpModel::build(&p, None).unwrap();
        let pi = stationary_distribution(&m, &ThresholdPolicy::expedite(&p)).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);
        assert!(pi[2..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn evaluation_refuses_zero_theta() {
        let p = params().with_theta(0.0).unwrap();
        let m = MdpModel::build(&p, None).unwrap();
        let rule = ThresholdPolicy::expedite(&p).decision_rule();
        assert_eq!(evaluate_policy(&m, &rule), Err(MdpError::NoAbandonment(0.0)));
    }

    #[test]
    fn multichain_rule_is_singular() {
        // a22 everywhere: 0 is absorbing and everything drains into it.
        let p = params();
        let m = MdpModel::build(&p, None).unwrap();
        let e = evaluate_policy(&m, &DecisionRule::constant(Action::A22, &p)).unwrap();
        assert!(e.gain.abs() < 1e-12);
        // two closed classes: 0 absorbing and a top segment that cannot fall
        let p = SystemParams::new([[1.0, 0.0], [1.0, 1.0]], 1.5, 0.5, 2).unwrap();
        let m = MdpModel::build(&p, None).unwrap();
        let mut rule = DecisionRule::constant(Action::A22, &p);
        rule.0[1] = Action::A21; // mu21 = 1 up, mu12 = 0 service, no waiting at s = 1
        rule.0[2] = Action::A11;
        rule.0[3] = Action::A11;
        assert_eq!(evaluate_policy(&m, &rule), Err(MdpError::Singular));
    }

    #[test]
    fn lemma_one_first_bias() {
        let p = params();
        let m = MdpModel::build(&p, None).unwrap();
        let n = analytic::optimal_threshold(&p);
        let e = evaluate_policy(&m, &ThresholdPolicy::new(n, &p).unwrap().decision_rule()).unwrap();
        let h1 = first_bias(&p, m.q(), n).unwrap();
        assert!((e.bias[1] - h1).abs() < 1e-9 * h1);
    }

    #[test]
    fn threshold_rule_is_fixed_point_and_certified() {
        let p = params();
        let m = MdpModel::build(&p, None).unwrap();
        let n = analytic::optimal_threshold(&p);
        let d = ThresholdPolicy::new(n, &p).unwrap();
        let cert = optimality_certificate(&m, &d).unwrap();
        assert!(cert.certified, "min Gamma {}", cert.min_value);
        let improved = policy_improvement(&m, &cert.evaluation, &d.decision_rule());
        assert_eq!(improved, d.decision_rule());
        assert!((cert.gamma(0, Action::A22) - cert.evaluation.gain).abs() < 1e-9 * cert.evaluation.gain);
    }

    #[test]
    fn closed_forms_agree_at_threshold() {
        let p = params();
        let q = rate_bound(&p);
        let n = analytic::optimal_threshold(&p);
        let a = bias_increments_from_gain(&p, q, n).unwrap();
        let b = bias_increments_closed_form(&p, q, n).unwrap();
        assert!((a.lower[n - 1] - a.upper[0]).abs() < 1e-9 * a.upper[0]);
        for s in 1..=p.max_state() {
            assert!((a.at(s) - b.at(s)).abs() < 1e-9 * b.at(s), "s={s}");
        }
    }
}
