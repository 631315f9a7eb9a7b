//! Reproducible numerical studies: random sweeps, threshold grids, the
//! expedite-vs-optimal ratio study, certificate campaigns and simulation
//! reports. Every study returns a [`Table`] with a fixed header.
//!
//! Draw `k` of a sweep is sampled from `ChaCha8Rng::seed_from_u64(seed)` on
//! stream `k`, so results do not depend on how the work is scheduled.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{self, AnalyticError};
use crate::mdp::{self, MdpError, MdpModel};
use crate::model::{canonicalize, Action, DecisionRule, ModelError, SystemParams, ThresholdPolicy};
use crate::sim::{self, SimConfig, SimError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// A CSV-ready table of formatted cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }
}

/// Formats a number with 12 significant digits, without trailing zeros.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{x:.11e}")
    }
}

/// Derives the `k`-th independent seed from a master seed.
pub fn split_seed(master: u64, k: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(k);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub fn fixed(x: f64) -> Self {
        Range { lo: x, hi: x }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }

    fn ok(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SynergyRange {
    /// One factor for both stations.
    Uniform(Range),
    /// Independent factors per station.
    TaskDependent(Range, Range),
}

/// Ranges for independent uniform parameter draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// `mu[i][j]`: range of the rate of server `i` at station `j`.
    pub mu: [[Range; 2]; 2],
    pub synergy: SynergyRange,
    pub theta: Range,
    /// Inclusive integer range for the buffer size.
    pub buffer: (usize, usize),
    pub draws: usize,
    pub seed: u64,
}

impl SweepSpec {
    /// Rates in `[0, 400]`, `gamma` in `[1, 2]`, `theta` in `[0, 10]`,
    /// buffer in `0..=100`.
    pub fn wide(draws: usize, seed: u64) -> Self {
        let r = Range::new(0.0, 400.0);
        SweepSpec {
            mu: [[r; 2]; 2],
            synergy: SynergyRange::Uniform(Range::new(1.0, 2.0)),
            theta: Range::new(0.0, 10.0),
            buffer: (0, 100),
            draws,
            seed,
        }
    }

    /// As [`SweepSpec::wide`] with independent station factors in `[1, 2]`.
    pub fn wide_task_dependent(draws: usize, seed: u64) -> Self {
        let g = Range::new(1.0, 2.0);
        SweepSpec { synergy: SynergyRange::TaskDependent(g, g), ..Self::wide(draws, seed) }
    }

    /// One cell of the ratio study: rate block `block` (see [`RATIO_BLOCKS`]),
    /// `theta` in `[0, theta_hi]`, fixed `gamma`, buffer 100.
    pub fn ratio_cell(block: usize, theta_hi: f64, gamma: f64, draws: usize, seed: u64) -> Self {
        let b = RATIO_BLOCKS[block];
        let (own, cross) = (Range::new(b.own.0, b.own.1), Range::new(b.cross.0, b.cross.1));
        SweepSpec {
            mu: [[own, cross], [cross, own]],
            synergy: SynergyRange::Uniform(Range::fixed(gamma)),
            theta: Range::new(0.0, theta_hi),
            buffer: (100, 100),
            draws,
            seed,
        }
    }

    pub fn with_buffer(self, lo: usize, hi: usize) -> Self {
        SweepSpec { buffer: (lo, hi), ..self }
    }

    pub fn with_theta(self, theta: Range) -> Self {
        SweepSpec { theta, ..self }
    }

    pub fn with_synergy(self, synergy: SynergyRange) -> Self {
        SweepSpec { synergy, ..self }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Spec(m.to_string()));
        let gammas = match self.synergy {
            SynergyRange::Uniform(g) => vec![g],
            SynergyRange::TaskDependent(a, b) => vec![a, b],
        };
        if !self.mu.iter().flatten().chain(&gammas).chain([&self.theta]).all(Range::ok) {
            return bad("ranges must be finite with lo <= hi");
        }
        if self.mu.iter().flatten().any(|r| r.lo < 0.0) {
            return bad("rates must be nonnegative");
        }
        if gammas.iter().any(|g| g.lo < 1.0) {
            return bad("synergy factors must be >= 1");
        }
        if self.theta.lo < 0.0 {
            return bad("abandonment rate must be nonnegative");
        }
        if self.buffer.0 > self.buffer.1 {
            return bad("buffer range must have lo <= hi");
        }
        if self.draws == 0 {
            return bad("need at least one draw");
        }
        if self.mu.iter().all(|row| row[0].hi == 0.0) || self.mu.iter().all(|row| row[1].hi == 0.0) {
            return bad("some station can never be served");
        }
        Ok(())
    }

    /// Draw `index`, canonicalized; invalid draws are redrawn on the same stream.
    pub fn sample(&self, index: u64) -> SystemParams {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        loop {
            let mut mu = [[0.0; 2]; 2];
            for (i, row) in self.mu.iter().enumerate() {
                for (j, r) in row.iter().enumerate() {
                    mu[i][j] = r.sample(&mut rng);
                }
            }
            let (g1, g2) = match self.synergy {
                SynergyRange::Uniform(g) => {
                    let g = g.sample(&mut rng);
                    (g, g)
                }
                SynergyRange::TaskDependent(a, b) => (a.sample(&mut rng), b.sample(&mut rng)),
            };
            let theta = self.theta.sample(&mut rng);
            let buffer = rng.random_range(self.buffer.0..=self.buffer.1);
            if let Ok(p) = canonicalize(mu, g1, g2, theta, buffer) {
                return p;
            }
        }
    }

    /// All draws, in index order.
    pub fn draws(&self) -> Result<Vec<SystemParams>, ExperimentError> {
        self.validate()?;
        Ok((0..self.draws as u64).into_par_iter().map(|k| self.sample(k)).collect())
    }
}

/// Rate block of the ratio study: own-station rates `mu11, mu22` and
/// cross rates `mu12, mu21`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioBlock {
    pub own: (f64, f64),
    pub cross: (f64, f64),
}

pub const RATIO_BLOCKS: [RatioBlock; 3] = [
    RatioBlock { own: (0.0, 400.0), cross: (0.0, 400.0) },
    RatioBlock { own: (200.0, 400.0), cross: (0.0, 200.0) },
    RatioBlock { own: (200.0, 400.0), cross: (0.0, 20.0) },
];

/// Upper ends of the two abandonment-rate ranges of the ratio study.
pub const RATIO_THETA_HI: [f64; 2] = [10.0, 1.0];

/// Columns shared by every per-instance row.
const PARAM_COLUMNS: [&str; 10] = ["mu11", "mu12", "mu21", "mu22", "gamma1", "gamma2", "theta", "buffer", "swapped", "uniform"];

fn param_cells(p: &SystemParams) -> Vec<String> {
    vec![
        fmt_num(p.mu11()),
        fmt_num(p.mu12()),
        fmt_num(p.mu21()),
        fmt_num(p.mu22()),
        fmt_num(p.gamma1()),
        fmt_num(p.gamma2()),
        fmt_num(p.theta()),
        p.buffer().to_string(),
        p.swapped().to_string(),
        p.is_uniform().to_string(),
    ]
}

/// Summary of the optimal threshold policy for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub params: SystemParams,
    pub threshold: usize,
    pub optimal_gain: f64,
    pub expedite_gain: f64,
    pub gamma_bound_strict: f64,
    pub gamma_bound_simple: f64,
    pub theta_bound_strict: f64,
    pub theta_bound_simple: f64,
    /// `(min Gamma, certified)`; present only when `theta > 0`.
    pub certificate: Option<(f64, bool)>,
}

pub fn policy_report(params: &SystemParams) -> Result<PolicyReport, ExperimentError> {
    let threshold = analytic::optimal_threshold(params);
    let bounds = analytic::theta_bounds(params);
    let certificate = if params.theta() > 0.0 {
        let model = MdpModel::build(params, None)?;
        let c = mdp::optimality_certificate(&model, &ThresholdPolicy::new(threshold, params)?)?;
        Some((c.min_value, c.certified))
    } else {
        None
    };
    Ok(PolicyReport {
        params: *params,
        threshold,
        optimal_gain: analytic::gain(threshold, params)?,
        expedite_gain: analytic::expedite_gain(params),
        gamma_bound_strict: analytic::gamma_bound_strict(params),
        gamma_bound_simple: analytic::gamma_bound_simple(params),
        theta_bound_strict: bounds.strict,
        theta_bound_simple: bounds.simple,
        certificate,
    })
}

impl PolicyReport {
    pub fn table(&self) -> Table {
        let mut h = PARAM_COLUMNS.to_vec();
        h.extend([
            "N",
            "g_N",
            "g_1",
            "gamma_bound_strict",
            "gamma_bound_simple",
            "theta_bound_strict",
            "theta_bound_simple",
            "min_gamma",
            "certified",
        ]);
        let mut t = Table::new(&h);
        let mut row = param_cells(&self.params);
        let (min, cert) = match self.certificate {
            Some((m, c)) => (fmt_num(m), c.to_string()),
            None => (String::new(), "skipped".into()),
        };
        row.extend([
            self.threshold.to_string(),
            fmt_num(self.optimal_gain),
            fmt_num(self.expedite_gain),
            fmt_num(self.gamma_bound_strict),
            fmt_num(self.gamma_bound_simple),
            fmt_num(self.theta_bound_strict),
            fmt_num(self.theta_bound_simple),
            min,
            cert,
        ]);
        t.rows.push(row);
        t
    }
}

/// `g_n` for `n = 1..=B+2`, with the sign of the matching `tau'(n)`.
pub fn gn_curve(params: &SystemParams) -> Table {
    let mut t = Table::new(&["n", "g_n", "tau_sign"]);
    let gains = analytic::gains(params);
    let signs = analytic::tau_signs(params);
    for (i, (g, s)) in gains.iter().zip(&signs).enumerate() {
        t.rows.push(vec![(i + 1).to_string(), fmt_num(*g), s.sign.symbol().to_string()]);
    }
    t
}

/// Evenly spaced grid axis with `points >= 1` values from `lo` to `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        Axis { lo, hi, points }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|k| if k + 1 == self.points { self.hi } else { self.lo + k as f64 * step }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridKind {
    /// Axes are `(gamma, theta)` with one synergy factor.
    GammaTheta,
    /// Axes are `(gamma1, gamma2)` at the base instance's `theta`.
    Gamma1Gamma2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub kind: GridKind,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `thresholds[i][k]` at `(x[i], y[k])`.
    pub thresholds: Vec<Vec<usize>>,
    /// Human-readable monotonicity violations (empty when the audit passes).
    pub violations: Vec<String>,
}

impl GridResult {
    pub fn monotone(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn table(&self) -> Table {
        let names = match self.kind {
            GridKind::GammaTheta => ["gamma", "theta", "N"],
            GridKind::Gamma1Gamma2 => ["gamma1", "gamma2", "N"],
        };
        let mut t = Table::new(&names);
        for (i, x) in self.x.iter().enumerate() {
            for (k, y) in self.y.iter().enumerate() {
                t.rows.push(vec![fmt_num(*x), fmt_num(*y), self.thresholds[i][k].to_string()]);
            }
        }
        t
    }
}

/// Optimal thresholds over a grid, with an audit that they are
/// non-increasing along both axes.
pub fn threshold_grid(base: &SystemParams, kind: GridKind, x: Axis, y: Axis) -> Result<GridResult, ExperimentError> {
    let (xs, ys) = (x.values(), y.values());
    let point = |a: f64, b: f64| -> Result<usize, ExperimentError> {
        let p = match kind {
            GridKind::GammaTheta => base.with_gamma(a)?.with_theta(b)?,
            GridKind::Gamma1Gamma2 => base.with_gammas(a, b)?,
        };
        Ok(analytic::optimal_threshold(&p))
    };
    let thresholds = xs
        .par_iter()
        .map(|&a| ys.iter().map(|&b| point(a, b)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    let mut violations = Vec::new();
    for i in 0..xs.len() {
        for k in 0..ys.len() {
            let n = thresholds[i][k];
            if i + 1 < xs.len() && thresholds[i + 1][k] > n {
                violations.push(format!(
                    "N rises from {n} to {} between x={} and x={} at y={}",
                    thresholds[i + 1][k],
                    fmt_num(xs[i]),
                    fmt_num(xs[i + 1]),
                    fmt_num(ys[k])
                ));
            }
            if k + 1 < ys.len() && thresholds[i][k + 1] > n {
                violations.push(format!(
                    "N rises from {n} to {} between y={} and y={} at x={}",
                    thresholds[i][k + 1],
                    fmt_num(ys[k]),
                    fmt_num(ys[k + 1]),
                    fmt_num(xs[i])
                ));
            }
        }
    }
    Ok(GridResult { kind, x: xs, y: ys, thresholds, violations })
}

/// The two-station instance used for the threshold grids.
pub fn grid_instance() -> SystemParams {
    SystemParams::new([[10.0, 2.0], [2.0, 13.0]], 1.0, 1.0, 12).expect("valid instance")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub params: Vec<SystemParams>,
    pub thresholds: Vec<usize>,
}

impl SweepResult {
    /// `(N, count)` pairs in increasing `N`.
    pub fn histogram(&self) -> Vec<(usize, usize)> {
        let mut h = BTreeMap::new();
        for &n in &self.thresholds {
            *h.entry(n).or_insert(0) += 1;
        }
        h.into_iter().collect()
    }

    pub fn fraction(&self, n: usize) -> f64 {
        self.thresholds.iter().filter(|&&m| m == n).count() as f64 / self.thresholds.len() as f64
    }

    pub fn histogram_table(&self) -> Table {
        let mut t = Table::new(&["N", "count", "fraction"]);
        let total = self.thresholds.len() as f64;
        for (n, c) in self.histogram() {
            t.rows.push(vec![n.to_string(), c.to_string(), fmt_num(c as f64 / total)]);
        }
        t
    }

    pub fn draws_table(&self) -> Table {
        let mut h = vec!["draw"];
        h.extend(PARAM_COLUMNS);
        h.push("N");
        let mut t = Table::new(&h);
        for (k, (p, n)) in self.params.iter().zip(&self.thresholds).enumerate() {
            let mut row = vec![k.to_string()];
            row.extend(param_cells(p));
            row.push(n.to_string());
            t.rows.push(row);
        }
        t
    }
}

/// Optimal threshold of every draw.
pub fn sweep(spec: &SweepSpec) -> Result<SweepResult, ExperimentError> {
    let params = spec.draws()?;
    let thresholds = params.par_iter().map(analytic::optimal_threshold).collect();
    Ok(SweepResult { params, thresholds })
}

/// `sum g_1 / sum g_N` over the draws of `spec`.
pub fn expedite_ratio(spec: &SweepSpec) -> Result<f64, ExperimentError> {
    let params = spec.draws()?;
    let pairs = params
        .par_iter()
        .map(|p| -> Result<(f64, f64), ExperimentError> {
            let n = analytic::optimal_threshold(p);
            Ok((analytic::gain(1, p)?, analytic::gain(n, p)?))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (num, den) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub block: usize,
    pub theta_hi: f64,
    pub gamma: f64,
    pub draws: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub rows: Vec<RatioRow>,
}

impl RatioReport {
    pub fn get(&self, block: usize, theta_hi: f64, gamma: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.block == block && r.theta_hi == theta_hi && (r.gamma - gamma).abs() < 1e-9)
            .map(|r| r.ratio)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "block", "mu11_mu22_lo", "mu11_mu22_hi", "mu12_mu21_lo", "mu12_mu21_hi", "theta_hi", "gamma", "draws", "ratio",
        ]);
        for r in &self.rows {
            let b = RATIO_BLOCKS[r.block];
            t.rows.push(vec![
                r.block.to_string(),
                fmt_num(b.own.0),
                fmt_num(b.own.1),
                fmt_num(b.cross.0),
                fmt_num(b.cross.1),
                fmt_num(r.theta_hi),
                fmt_num(r.gamma),
                r.draws.to_string(),
                fmt_num(r.ratio),
            ]);
        }
        t
    }
}

/// The synergy grid of the ratio study: 1.0, 1.1, ..., 2.0.
pub fn ratio_gamma_grid() -> Vec<f64> {
    (0..=10).map(|k| 1.0 + k as f64 / 10.0).collect()
}

/// Ratio study over every rate block, both abandonment ranges and every
/// `gamma`. Each cell gets its own independent draws, seeded by
/// [`split_seed`] with the cell index.
pub fn ratio_study(gammas: &[f64], draws: usize, seed: u64) -> Result<RatioReport, ExperimentError> {
    let mut rows = Vec::new();
    let mut cell = 0u64;
    for block in 0..RATIO_BLOCKS.len() {
        for &theta_hi in &RATIO_THETA_HI {
            for &gamma in gammas {
                let spec = SweepSpec::ratio_cell(block, theta_hi, gamma, draws, split_seed(seed, cell));
                rows.push(RatioRow { block, theta_hi, gamma, draws, ratio: expedite_ratio(&spec)? });
                cell += 1;
            }
        }
    }
    Ok(RatioReport { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyRow {
    pub params: SystemParams,
    pub threshold: usize,
    pub min_gamma: f64,
    /// `min_gamma / (S1 + S2)`.
    pub relative_min: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub rows: Vec<CertifyRow>,
}

impl CertifyReport {
    pub fn all_certified(&self) -> bool {
        self.rows.iter().all(|r| r.certified)
    }

    pub fn global_relative_min(&self) -> f64 {
        self.rows.iter().map(|r| r.relative_min).fold(f64::INFINITY, f64::min)
    }

    pub fn failures(&self) -> impl Iterator<Item = (usize, &CertifyRow)> {
        self.rows.iter().enumerate().filter(|(_, r)| !r.certified)
    }

    pub fn table(&self) -> Table {
        let mut h = vec!["draw"];
        h.extend(PARAM_COLUMNS);
        h.extend(["N", "min_gamma", "relative_min", "certified"]);
        let mut t = Table::new(&h);
        for (k, r) in self.rows.iter().enumerate() {
            let mut row = vec![k.to_string()];
            row.extend(param_cells(&r.params));
            row.extend([r.threshold.to_string(), fmt_num(r.min_gamma), fmt_num(r.relative_min), r.certified.to_string()]);
            t.rows.push(row);
        }
        t
    }
}

/// Certificate of `d_N` on every draw. Refuses specs whose abandonment
/// range is `{0}`.
pub fn certify_campaign(spec: &SweepSpec) -> Result<CertifyReport, ExperimentError> {
    spec.validate()?;
    if spec.theta.hi <= 0.0 {
        return Err(ExperimentError::Refused("certificates need theta > 0; the theta range is {0}".into()));
    }
    let rows = spec
        .draws()?
        .par_iter()
        .map(|p| -> Result<CertifyRow, ExperimentError> {
            let threshold = analytic::optimal_threshold(p);
            let model = MdpModel::build(p, None)?;
            let c = mdp::optimality_certificate(&model, &ThresholdPolicy::new(threshold, p)?)?;
            Ok(CertifyRow {
                params: *p,
                threshold,
                min_gamma: c.min_value,
                relative_min: c.min_value / (p.team_rate1() + p.team_rate2()),
                certified: c.certified,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CertifyReport { rows })
}

/// Which stationary rule to simulate on the two-station line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RuleChoice {
    /// The optimal threshold rule `d_N`.
    Optimal,
    Threshold(usize),
    Constant(Action),
}

impl RuleChoice {
    pub fn rule(&self, params: &SystemParams) -> Result<(DecisionRule, Option<f64>), ExperimentError> {
        Ok(match self {
            RuleChoice::Optimal => {
                let n = analytic::optimal_threshold(params);
                (ThresholdPolicy::new(n, params)?.decision_rule(), Some(analytic::gain(n, params)?))
            }
            RuleChoice::Threshold(n) => {
                (ThresholdPolicy::new(*n, params)?.decision_rule(), Some(analytic::gain(*n, params)?))
            }
            RuleChoice::Constant(a) => (DecisionRule::constant(*a, params), None),
        })
    }
}

/// Simulation runs with the closed-form value they should estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub runs: Vec<sim::SimResult>,
    pub analytic: Option<f64>,
}

impl SimReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "seed",
            "stream",
            "throughput",
            "ci_halfwidth",
            "abandonment_rate",
            "entered",
            "departed",
            "abandoned",
            "in_system_end",
            "events",
            "analytic",
            "covered",
        ]);
        for r in &self.runs {
            let e = r.events;
            t.rows.push(vec![
                r.seed.to_string(),
                r.stream.to_string(),
                fmt_num(r.throughput),
                fmt_num(r.ci_halfwidth),
                fmt_num(r.abandonment_rate),
                e.entered.to_string(),
                e.departed.to_string(),
                e.abandoned.to_string(),
                e.in_system_end.to_string(),
                e.total.to_string(),
                self.analytic.map(fmt_num).unwrap_or_default(),
                self.analytic.map(|g| r.covers(g).to_string()).unwrap_or_default(),
            ]);
        }
        t
    }
}

pub fn simulate_two_station(
    params: &SystemParams,
    choice: &RuleChoice,
    cfg: &SimConfig,
    reps: u64,
) -> Result<SimReport, ExperimentError> {
    let (rule, analytic) = choice.rule(params)?;
    let runs = sim::replicate(cfg, reps, |c| sim::simulate_two_station(params, &rule, c))?;
    Ok(SimReport { runs, analytic })
}

pub fn simulate_generalist(
    gp: &crate::model::GeneralistParams,
    policy: &sim::GeneralistPolicy,
    cfg: &SimConfig,
    reps: u64,
) -> Result<SimReport, ExperimentError> {
    let analytic = matches!(policy, sim::GeneralistPolicy::Expedite).then(|| analytic::expedite_gain_generalist(gp));
    let runs = sim::replicate(cfg, reps, |c| sim::simulate_generalist(gp, policy, c))?;
    Ok(SimReport { runs, analytic })
}
