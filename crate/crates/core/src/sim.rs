//! Seeded simulators.
//!
//! The two-station line is a CTMC on `0..=B+2` and is simulated exactly:
//! one exponential holding time at the state's total rate, then a
//! categorical jump. The generalist line keeps an explicit event calendar
//! with individual patience clocks so that blocked and buffered customers
//! are tracked one by one.
//!
//! Every run draws from `ChaCha8Rng::seed_from_u64(seed)` on stream
//! `stream`; replication `k` of a batch uses stream `k`, so replications are
//! independent and reproducible in any execution order.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::mdp::event_rates;
use crate::model::{Action, DecisionRule, GeneralistParams, SystemParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("decision rule has {got} actions, model has {expected} states")]
    RuleLength { got: usize, expected: usize },
    #[error("state {0} has no outgoing events")]
    Absorbing(usize),
    #[error("invalid static schedule: {0}")]
    Schedule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Horizon {
    /// Number of simulated events (jumps).
    Events(u64),
    /// Simulated time units.
    Time(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: Horizon,
    /// Fraction of the horizon discarded before measuring.
    pub warmup: f64,
    pub seed: u64,
    pub stream: u64,
    pub batches: usize,
}

impl SimConfig {
    pub fn events(n: u64, seed: u64) -> Self {
        SimConfig { horizon: Horizon::Events(n), warmup: 0.1, seed, stream: 0, batches: 20 }
    }

    pub fn time(t: f64, seed: u64) -> Self {
        SimConfig { horizon: Horizon::Time(t), warmup: 0.1, seed, stream: 0, batches: 20 }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        SimConfig { stream, ..self }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if !(0.0..1.0).contains(&self.warmup) {
            return bad("warmup must lie in [0, 1)");
        }
        if self.batches < 2 {
            return bad("need at least 2 batches");
        }
        match self.horizon {
            Horizon::Events(n) => {
                let measured = n - (self.warmup * n as f64).floor() as u64;
                if measured < self.batches as u64 {
                    return bad("fewer measured events than batches");
                }
            }
            Horizon::Time(t) => {
                if !(t.is_finite() && t > 0.0) {
                    return bad("time horizon must be positive and finite");
                }
            }
        }
        Ok(())
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventCounts {
    /// Customers that entered the line over the whole run.
    pub entered: u64,
    pub departed: u64,
    pub abandoned: u64,
    /// Customers still in the line when the run stopped.
    pub in_system_end: u64,
    /// Total processed events, warmup included.
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Departures per unit time after warmup.
    pub throughput: f64,
    pub abandonment_rate: f64,
    /// Half-width of the 95% batch-means interval for the throughput.
    pub ci_halfwidth: f64,
    /// Measured (post-warmup) simulated time.
    pub measured_time: f64,
    pub events: EventCounts,
    pub seed: u64,
    pub stream: u64,
}

impl SimResult {
    pub fn covers(&self, value: f64) -> bool {
        (self.throughput - value).abs() <= self.ci_halfwidth
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Departure,
    Abandonment,
    Other,
}

/// Batch-means bookkeeping shared by both simulators.
struct Tracker {
    horizon: Horizon,
    batches: usize,
    warm_events: u64,
    chunk: u64,
    warm_time: f64,
    batch_time: f64,
    clock: f64,
    events: u64,
    departures: Vec<u64>,
    abandonments: Vec<u64>,
    durations: Vec<f64>,
}

impl Tracker {
    fn new(cfg: &SimConfig) -> Self {
        let b = cfg.batches;
        let (warm_events, chunk, warm_time, batch_time) = match cfg.horizon {
            Horizon::Events(n) => {
                let w = (cfg.warmup * n as f64).floor() as u64;
                (w, (n - w) / b as u64, 0.0, 0.0)
            }
            Horizon::Time(t) => {
                let w = cfg.warmup * t;
                (0, 0, w, (t - w) / b as f64)
            }
        };
        Tracker {
            horizon: cfg.horizon,
            batches: b,
            warm_events,
            chunk,
            warm_time,
            batch_time,
            clock: 0.0,
            events: 0,
            departures: vec![0; b],
            abandonments: vec![0; b],
            durations: vec![0.0; b],
        }
    }

    fn time_batch(&self, t: f64) -> usize {
        (((t - self.warm_time) / self.batch_time) as usize).min(self.batches - 1)
    }

    /// Lets `hold` time pass before the next event. Returns `false` when the
    /// horizon ends first; the event must then be discarded.
    fn advance(&mut self, hold: f64) -> bool {
        match self.horizon {
            Horizon::Events(_) => {
                if self.events >= self.warm_events {
                    let b = self.event_batch(self.events + 1);
                    self.durations[b] += hold;
                }
                self.clock += hold;
                true
            }
            Horizon::Time(t) => {
                let end = (self.clock + hold).min(t);
                let mut from = self.clock.max(self.warm_time);
                while from < end {
                    let b = self.time_batch(from);
                    let edge = if b + 1 == self.batches { t } else { self.warm_time + (b + 1) as f64 * self.batch_time };
                    let to = edge.min(end);
                    self.durations[b] += to - from;
                    if to <= from {
                        break;
                    }
                    from = to;
                }
                self.clock += hold;
                self.clock <= t
            }
        }
    }

    fn event_batch(&self, index: u64) -> usize {
        (((index - self.warm_events - 1) / self.chunk) as usize).min(self.batches - 1)
    }

    fn record(&mut self, kind: Kind) {
        self.events += 1;
        let batch = match self.horizon {
            Horizon::Events(_) => (self.events > self.warm_events).then(|| self.event_batch(self.events)),
            Horizon::Time(_) => (self.clock >= self.warm_time).then(|| self.time_batch(self.clock)),
        };
        if let Some(b) = batch {
            match kind {
                Kind::Departure => self.departures[b] += 1,
                Kind::Abandonment => self.abandonments[b] += 1,
                Kind::Other => {}
            }
        }
    }

    fn done(&self) -> bool {
        match self.horizon {
            Horizon::Events(n) => self.events >= n,
            Horizon::Time(_) => false,
        }
    }

    fn finish(self, counts: EventCounts, cfg: &SimConfig) -> SimResult {
        let time: f64 = self.durations.iter().sum();
        let dep: u64 = self.departures.iter().sum();
        let ab: u64 = self.abandonments.iter().sum();
        let rates: Vec<f64> = self
            .departures
            .iter()
            .zip(&self.durations)
            .map(|(&d, &dt)| if dt > 0.0 { d as f64 / dt } else { 0.0 })
            .collect();
        let b = rates.len() as f64;
        let mean = rates.iter().sum::<f64>() / b;
        let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (b - 1.0);
        let t = StudentsT::new(0.0, 1.0, b - 1.0).expect("batches >= 2").inverse_cdf(0.975);
        let safe = |x: u64| if time > 0.0 { x as f64 / time } else { 0.0 };
        SimResult {
            throughput: safe(dep),
            abandonment_rate: safe(ab),
            ci_halfwidth: t * (var / b).sqrt(),
            measured_time: time,
            events: counts,
            seed: cfg.seed,
            stream: cfg.stream,
        }
    }
}

/// Draws an exponential holding time with the given total rate.
pub fn sample_holding_time<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    Exp::new(rate).expect("positive rate").sample(rng)
}

/// Total event rate of state `s` under action `a` in the two-station line.
pub fn total_event_rate(params: &SystemParams, state: usize, action: Action) -> f64 {
    event_rates(params, state, action).total()
}

/// Holding times observed while the two-station line is held in state `s`
/// under action `a` (the state is reset after every jump).
pub fn frozen_state_holding_times(
    params: &SystemParams,
    state: usize,
    action: Action,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>, SimError> {
    let rate = total_event_rate(params, state, action);
    if rate <= 0.0 {
        return Err(SimError::Absorbing(state));
    }
    let mut rng = SimConfig::events(samples as u64, seed).rng();
    Ok((0..samples).map(|_| sample_holding_time(&mut rng, rate)).collect())
}

/// Simulates the two-station line under a stationary rule, starting empty.
pub fn simulate_two_station(params: &SystemParams, rule: &DecisionRule, cfg: &SimConfig) -> Result<SimResult, SimError> {
    cfg.validate()?;
    let states = params.max_state() + 1;
    if rule.len() != states {
        return Err(SimError::RuleLength { got: rule.len(), expected: states });
    }
    let rates: Vec<_> = (0..states).map(|s| event_rates(params, s, rule.action(s))).collect();
    let mut rng = cfg.rng();
    let mut tracker = Tracker::new(cfg);
    let mut counts = EventCounts::default();
    let mut s = 0usize;
    while !tracker.done() {
        let r = rates[s];
        let total = r.total();
        if total <= 0.0 {
            return Err(SimError::Absorbing(s));
        }
        if !tracker.advance(sample_holding_time(&mut rng, total)) {
            break;
        }
        let u = rng.random::<f64>() * total;
        let kind = if u < r.up {
            s += 1;
            counts.entered += 1;
            Kind::Other
        } else if u < r.up + r.service {
            s -= 1;
            counts.departed += 1;
            Kind::Departure
        } else {
            s -= 1;
            counts.abandoned += 1;
            Kind::Abandonment
        };
        tracker.record(kind);
    }
    counts.in_system_end = s as u64;
    counts.total = tracker.events;
    Ok(tracker.finish(counts, cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GeneralistPolicy {
    /// All servers form one team that carries each customer through the line.
    Expedite,
    /// `stations[i]` is the station server `i` is permanently assigned to.
    Static(Vec<usize>),
}

/// Simulates the generalist line with an always-full input.
pub fn simulate_generalist(gp: &GeneralistParams, policy: &GeneralistPolicy, cfg: &SimConfig) -> Result<SimResult, SimError> {
    cfg.validate()?;
    match policy {
        GeneralistPolicy::Expedite => Ok(simulate_expedite(gp, cfg)),
        GeneralistPolicy::Static(stations) => simulate_static(gp, stations, cfg),
    }
}

fn simulate_expedite(gp: &GeneralistParams, cfg: &SimConfig) -> SimResult {
    let total: f64 = gp.mu.iter().sum();
    let rates: Vec<f64> = (0..gp.stations()).map(|j| gp.gammas[j] * gp.delta[j] * total).collect();
    let mut rng = cfg.rng();
    let mut tracker = Tracker::new(cfg);
    let mut counts = EventCounts { entered: 1, ..Default::default() };
    let mut station = 0;
    while !tracker.done() {
        if !tracker.advance(sample_holding_time(&mut rng, rates[station])) {
            break;
        }
        station += 1;
        let kind = if station == rates.len() {
            station = 0;
            counts.departed += 1;
            counts.entered += 1;
            Kind::Departure
        } else {
            Kind::Other
        };
        tracker.record(kind);
    }
    counts.in_system_end = 1;
    counts.total = tracker.events;
    tracker.finish(counts, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Service { station: usize },
    Patience { customer: u64 },
}

struct Line {
    rates: Vec<f64>,
    /// `capacity[j]`: waiting room in front of station `j` (`j >= 1`).
    capacity: Vec<usize>,
    busy: Vec<Option<u64>>,
    blocked: Vec<Option<u64>>,
    queue: Vec<VecDeque<u64>>,
    waiting: HashSet<u64>,
    calendar: BinaryHeap<Reverse<(Time, u64, Event)>>,
    seq: u64,
    next_customer: u64,
    theta: f64,
    counts: EventCounts,
}

impl Line {
    fn schedule(&mut self, at: f64, event: Event) {
        self.seq += 1;
        self.calendar.push(Reverse((Time(at), self.seq, event)));
    }

    fn start(&mut self, now: f64, station: usize, customer: u64, rng: &mut ChaCha8Rng) {
        self.waiting.remove(&customer);
        self.busy[station] = Some(customer);
        let at = now + sample_holding_time(rng, self.rates[station]);
        self.schedule(at, Event::Service { station });
    }

    fn wait(&mut self, now: f64, customer: u64, rng: &mut ChaCha8Rng) {
        self.waiting.insert(customer);
        if self.theta > 0.0 {
            let at = now + sample_holding_time(rng, self.theta);
            self.schedule(at, Event::Patience { customer });
        }
    }

    /// Moves customers forward and starts idle stations until nothing changes.
    fn settle(&mut self, now: f64, rng: &mut ChaCha8Rng) {
        loop {
            let mut changed = false;
            for j in 0..self.rates.len() {
                if self.busy[j].is_none() && self.blocked[j].is_none() {
                    let next = if j == 0 {
                        self.next_customer += 1;
                        self.counts.entered += 1;
                        Some(self.next_customer)
                    } else {
                        self.queue[j].pop_front().or_else(|| self.blocked[j - 1].take())
                    };
                    if let Some(c) = next {
                        self.start(now, j, c, rng);
                        changed = true;
                    }
                }
                if j >= 1 && self.blocked[j - 1].is_some() && self.queue[j].len() < self.capacity[j] {
                    let c = self.blocked[j - 1].take().expect("checked");
                    self.queue[j].push_back(c);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    fn complete(&mut self, now: f64, station: usize, rng: &mut ChaCha8Rng) -> Kind {
        let c = self.busy[station].take().expect("service event for an idle station");
        if station + 1 == self.rates.len() {
            self.counts.departed += 1;
            return Kind::Departure;
        }
        self.blocked[station] = Some(c);
        self.wait(now, c, rng);
        Kind::Other
    }

    /// Removes an impatient customer; `false` if it already started service.
    fn abandon(&mut self, customer: u64) -> bool {
        if !self.waiting.remove(&customer) {
            return false;
        }
        for slot in self.blocked.iter_mut() {
            if *slot == Some(customer) {
                *slot = None;
            }
        }
        for q in self.queue.iter_mut() {
            q.retain(|&c| c != customer);
        }
        self.counts.abandoned += 1;
        true
    }

    fn in_system(&self) -> u64 {
        let busy = self.busy.iter().flatten().count();
        let blocked = self.blocked.iter().flatten().count();
        let queued: usize = self.queue.iter().map(VecDeque::len).sum();
        (busy + blocked + queued) as u64
    }
}

fn simulate_static(gp: &GeneralistParams, stations: &[usize], cfg: &SimConfig) -> Result<SimResult, SimError> {
    let n = gp.stations();
    if stations.len() != gp.servers() {
        return Err(SimError::Schedule(format!("{} assignments for {} servers", stations.len(), gp.servers())));
    }
    if let Some(&j) = stations.iter().find(|&&j| j >= n) {
        return Err(SimError::Schedule(format!("station {j} does not exist")));
    }
    let mut rates = Vec::with_capacity(n);
    for j in 0..n {
        let team: Vec<f64> = stations.iter().zip(&gp.mu).filter(|(&s, _)| s == j).map(|(_, &m)| m).collect();
        let synergy = if team.len() >= 2 { gp.gammas[j] } else { 1.0 };
        let rate = synergy * gp.delta[j] * team.iter().sum::<f64>();
        if rate <= 0.0 {
            return Err(SimError::Schedule(format!("station {j} has no working server")));
        }
        rates.push(rate);
    }
    let mut capacity = vec![0];
    capacity.extend(gp.buffers.iter().copied());
    let mut line = Line {
        rates,
        capacity,
        busy: vec![None; n],
        blocked: vec![None; n],
        queue: vec![VecDeque::new(); n],
        waiting: HashSet::new(),
        calendar: BinaryHeap::new(),
        seq: 0,
        next_customer: 0,
        theta: gp.theta,
        counts: EventCounts::default(),
    };
    let mut rng = cfg.rng();
    let mut tracker = Tracker::new(cfg);
    let mut now = 0.0;
    line.settle(now, &mut rng);
    while !tracker.done() {
        let Reverse((Time(at), _, event)) = line.calendar.pop().expect("some station is always busy");
        if let Event::Patience { customer } = event {
            if !line.waiting.contains(&customer) {
                continue;
            }
        }
        if !tracker.advance(at - now) {
            break;
        }
        now = at;
        let kind = match event {
            Event::Service { station } => line.complete(now, station, &mut rng),
            Event::Patience { customer } => {
                line.abandon(customer);
                Kind::Abandonment
            }
        };
        line.settle(now, &mut rng);
        tracker.record(kind);
    }
    line.counts.in_system_end = line.in_system();
    line.counts.total = tracker.events;
    Ok(tracker.finish(line.counts, cfg))
}

/// Runs `reps` replications on streams `0..reps` in parallel, returned in
/// stream order.
pub fn replicate<F>(cfg: &SimConfig, reps: u64, run: F) -> Result<Vec<SimResult>, SimError>
where
    F: Fn(&SimConfig) -> Result<SimResult, SimError> + Sync,
{
    (0..reps).into_par_iter().map(|k| run(&cfg.with_stream(k))).collect()
}
