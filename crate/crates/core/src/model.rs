//! Problem-instance types shared by the analytic, MDP, simulation and
//! experiment layers.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("rate mu[{row}][{col}] = {value} must be finite and nonnegative")]
    BadRate { row: usize, col: usize, value: f64 },
    #[error("station {station} has zero total service rate")]
    IdleStation { station: usize },
    #[error("synergy factor {value} must be finite and >= 1")]
    BadSynergy { value: f64 },
    #[error("abandonment rate {value} must be finite and >= 0")]
    BadAbandonment { value: f64 },
    #[error("server {server} has zero rate at both stations and there is no synergy")]
    UselessServer { server: usize },
    #[error("threshold {n} outside 1..={max}")]
    ThresholdOutOfRange { n: usize, max: usize },
    #[error("generalist instance: {0}")]
    Generalist(String),
}

/// Server assignment in the two-station, two-server system.
///
/// `A{s1}{s2}` puts server 1 at station `s1` and server 2 at station `s2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    A11,
    A12,
    A21,
    A22,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::A11, Action::A12, Action::A21, Action::A22];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The same physical assignment after servers 1 and 2 trade labels.
    pub fn relabel_servers(self) -> Action {
        match self {
            Action::A11 => Action::A11,
            Action::A12 => Action::A21,
            Action::A21 => Action::A12,
            Action::A22 => Action::A22,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Action::A11 => "a11",
            Action::A12 => "a12",
            Action::A21 => "a21",
            Action::A22 => "a22",
        };
        f.write_str(s)
    }
}

/// A validated two-station, two-server instance in canonical orientation
/// (`mu11 * mu22 >= mu12 * mu21`).
///
/// `mu[i][j]` is the rate of server `i` at station `j` (zero-based here).
/// `gamma1`/`gamma2` are the synergy factors at stations 1 and 2; they are
/// equal in the uniform-synergy model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    mu: [[f64; 2]; 2],
    gamma1: f64,
    gamma2: f64,
    theta: f64,
    buffer: usize,
    swapped: bool,
}

impl SystemParams {
    /// Uniform synergy instance, relabeling servers if needed.
    pub fn new(mu: [[f64; 2]; 2], gamma: f64, theta: f64, buffer: usize) -> Result<Self, ModelError> {
        canonicalize(mu, gamma, gamma, theta, buffer)
    }

    /// Task-dependent synergy instance, relabeling servers if needed.
    pub fn task_dependent(
        mu: [[f64; 2]; 2],
        gamma1: f64,
        gamma2: f64,
        theta: f64,
        buffer: usize,
    ) -> Result<Self, ModelError> {
        canonicalize(mu, gamma1, gamma2, theta, buffer)
    }

    /// Validates without relabeling servers. The closed forms in
    /// [`crate::analytic`] assume canonical orientation; this constructor
    /// exists for working with the MDP in the caller's own labeling.
    pub fn as_given(
        mu: [[f64; 2]; 2],
        gamma1: f64,
        gamma2: f64,
        theta: f64,
        buffer: usize,
    ) -> Result<Self, ModelError> {
        validate(&mu, gamma1, gamma2, theta)?;
        Ok(SystemParams { mu, gamma1, gamma2, theta, buffer, swapped: false })
    }

    pub fn mu(&self) -> [[f64; 2]; 2] {
        self.mu
    }
    pub fn mu11(&self) -> f64 {
        self.mu[0][0]
    }
    pub fn mu12(&self) -> f64 {
        self.mu[0][1]
    }
    pub fn mu21(&self) -> f64 {
        self.mu[1][0]
    }
    pub fn mu22(&self) -> f64 {
        self.mu[1][1]
    }
    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }
    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn buffer(&self) -> usize {
        self.buffer
    }
    /// True when the input rows were exchanged to reach canonical orientation.
    pub fn swapped(&self) -> bool {
        self.swapped
    }
    pub fn is_uniform(&self) -> bool {
        self.gamma1 == self.gamma2
    }

    /// Largest state `B + 2`.
    pub fn max_state(&self) -> usize {
        self.buffer + 2
    }

    /// Combined rate of both servers at station 1 without synergy.
    pub fn sigma1(&self) -> f64 {
        self.mu[0][0] + self.mu[1][0]
    }
    pub fn sigma2(&self) -> f64 {
        self.mu[0][1] + self.mu[1][1]
    }
    /// Team rate at station 1, `gamma1 * sigma1`.
    pub fn team_rate1(&self) -> f64 {
        self.gamma1 * self.sigma1()
    }
    /// Team rate at station 2, `gamma2 * sigma2`.
    pub fn team_rate2(&self) -> f64 {
        self.gamma2 * self.sigma2()
    }
    /// `mu11 * mu22 - mu12 * mu21`, nonnegative in canonical orientation.
    pub fn specialization(&self) -> f64 {
        self.mu11() * self.mu22() - self.mu12() * self.mu21()
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self, ModelError> {
        self.with_gammas(gamma, gamma)
    }

    pub fn with_gammas(&self, gamma1: f64, gamma2: f64) -> Result<Self, ModelError> {
        validate(&self.mu, gamma1, gamma2, self.theta)?;
        Ok(SystemParams { gamma1, gamma2, ..*self })
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self, ModelError> {
        validate(&self.mu, self.gamma1, self.gamma2, theta)?;
        Ok(SystemParams { theta, ..*self })
    }

    pub fn with_buffer(&self, buffer: usize) -> Self {
        SystemParams { buffer, ..*self }
    }
}

impl fmt::Display for SystemParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mu=[[{}, {}], [{}, {}]] gamma1={} gamma2={} theta={} B={}",
            self.mu11(),
            self.mu12(),
            self.mu21(),
            self.mu22(),
            self.gamma1,
            self.gamma2,
            self.theta,
            self.buffer
        )
    }
}

fn validate(mu: &[[f64; 2]; 2], gamma1: f64, gamma2: f64, theta: f64) -> Result<(), ModelError> {
    for (row, rates) in mu.iter().enumerate() {
        for (col, &value) in rates.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ModelError::BadRate { row: row + 1, col: col + 1, value });
            }
        }
    }
    for station in 0..2 {
        if mu[0][station] + mu[1][station] <= 0.0 {
            return Err(ModelError::IdleStation { station: station + 1 });
        }
    }
    for g in [gamma1, gamma2] {
        if !(g.is_finite() && g >= 1.0) {
            return Err(ModelError::BadSynergy { value: g });
        }
    }
    if !(theta.is_finite() && theta >= 0.0) {
        return Err(ModelError::BadAbandonment { value: theta });
    }
    // Without synergy a server with no solo rate contributes nothing.
    if gamma1 == 1.0 && gamma2 == 1.0 {
        for (server, rates) in mu.iter().enumerate() {
            if rates[0] + rates[1] <= 0.0 {
                return Err(ModelError::UselessServer { server: server + 1 });
            }
        }
    }
    Ok(())
}

/// Validates a raw instance and relabels the servers so that
/// `mu11 * mu22 >= mu12 * mu21`. Ties keep the input orientation.
pub fn canonicalize(
    raw_mu: [[f64; 2]; 2],
    gamma1: f64,
    gamma2: f64,
    theta: f64,
    buffer: usize,
) -> Result<SystemParams, ModelError> {
    validate(&raw_mu, gamma1, gamma2, theta)?;
    let swap = raw_mu[0][0] * raw_mu[1][1] < raw_mu[0][1] * raw_mu[1][0];
    let mu = if swap { [raw_mu[1], raw_mu[0]] } else { raw_mu };
    Ok(SystemParams { mu, gamma1, gamma2, theta, buffer, swapped: swap })
}

/// The threshold rule `d_n`: both servers at station 1 in state 0, split by
/// specialty (`a12`) in states `1..n`, both at station 2 from state `n` on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    n: usize,
    max_state: usize,
}

impl ThresholdPolicy {
    pub fn new(n: usize, params: &SystemParams) -> Result<Self, ModelError> {
        let max_state = params.max_state();
        if n == 0 || n > max_state {
            return Err(ModelError::ThresholdOutOfRange { n, max: max_state });
        }
        Ok(ThresholdPolicy { n, max_state })
    }

    /// The expedite policy `d_1`.
    pub fn expedite(params: &SystemParams) -> Self {
        ThresholdPolicy { n: 1, max_state: params.max_state() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_state(&self) -> usize {
        self.max_state
    }

    pub fn action(&self, state: usize) -> Action {
        if state == 0 {
            Action::A11
        } else if state < self.n {
            Action::A12
        } else {
            Action::A22
        }
    }

    pub fn decision_rule(&self) -> DecisionRule {
        DecisionRule((0..=self.max_state).map(|s| self.action(s)).collect())
    }
}

/// A stationary deterministic decision rule: one action per state `0..=B+2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecisionRule(pub Vec<Action>);

impl DecisionRule {
    pub fn constant(action: Action, params: &SystemParams) -> Self {
        DecisionRule(vec![action; params.max_state() + 1])
    }

    pub fn from_fn(params: &SystemParams, f: impl Fn(usize) -> Action) -> Self {
        DecisionRule((0..=params.max_state()).map(f).collect())
    }

    pub fn actions(&self) -> &[Action] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn action(&self, state: usize) -> Action {
        self.0[state]
    }

    pub fn relabel_servers(&self) -> DecisionRule {
        DecisionRule(self.0.iter().map(|a| a.relabel_servers()).collect())
    }

    /// Returns `n` if this rule coincides with some threshold rule `d_n`.
    pub fn as_threshold(&self) -> Option<usize> {
        let max_state = self.0.len().checked_sub(1)?;
        (1..=max_state).find(|&n| {
            let t = ThresholdPolicy { n, max_state };
            self.0.iter().enumerate().all(|(s, &a)| t.action(s) == a)
        })
    }
}

impl fmt::Display for DecisionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|a| a.to_string()).collect();
        write!(f, "[{}]", parts.join(" "))
    }
}

/// Generalist instance with `M` servers and `N` stations: server `i` works
/// at station `j` with rate `mu[i] * delta[j]`; a team at station `j`
/// gains the factor `gammas[j]`.
///
/// `theta` is the patience rate of customers waiting for stations `2..=N`.
/// It never matters under the expedite policy, which keeps nobody waiting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralistParams {
    pub mu: Vec<f64>,
    pub delta: Vec<f64>,
    pub gammas: Vec<f64>,
    pub buffers: Vec<usize>,
    pub theta: f64,
}

impl GeneralistParams {
    pub fn new(
        mu: Vec<f64>,
        delta: Vec<f64>,
        gammas: Vec<f64>,
        buffers: Vec<usize>,
        theta: f64,
    ) -> Result<Self, ModelError> {
        let err = |m: String| Err(ModelError::Generalist(m));
        if mu.is_empty() || delta.is_empty() {
            return err("need at least one server and one station".into());
        }
        if mu.iter().any(|&m| !(m.is_finite() && m >= 0.0)) || mu.iter().sum::<f64>() <= 0.0 {
            return err("server speeds must be nonnegative with a positive total".into());
        }
        if delta.iter().any(|&d| !(d.is_finite() && d > 0.0)) {
            return err("station easiness values must be positive".into());
        }
        if gammas.len() != delta.len() {
            return err(format!("expected {} synergy factors, got {}", delta.len(), gammas.len()));
        }
        if gammas.iter().any(|&g| !(g.is_finite() && g >= 1.0)) {
            return err("synergy factors must be >= 1".into());
        }
        if buffers.len() + 1 != delta.len() {
            return err(format!("expected {} buffers, got {}", delta.len() - 1, buffers.len()));
        }
        if !(theta.is_finite() && theta >= 0.0) {
            return err("abandonment rate must be >= 0".into());
        }
        Ok(GeneralistParams { mu, delta, gammas, buffers, theta })
    }

    pub fn servers(&self) -> usize {
        self.mu.len()
    }

    pub fn stations(&self) -> usize {
        self.delta.len()
    }
}
