//! Joint statistics learning and scheduling.
//!
//! Each slot the scheduler either probes one user at a uniformly random rate
//! (user `i` with probability `x^i_{ĉ_i}/N`) to collect a success/failure
//! sample, or transmits data using the max-weight rule on the empirical
//! conditional success probabilities. The probing probabilities come from a
//! min-max plan that equalizes, per user, the slowest learning rate
//! `η_{i,ĉ} = P(Ĉ_i = ĉ)·x^i_ĉ/N` subject to `Σ_ĉ η_{i,ĉ} = γ/N`.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::channel::{RateSpace, SuccessTable};
use crate::error::{Error, Result};
use crate::fmt::sig17;
use crate::policy::{best_rate, max_weight, Decision, QueueVector};

/// Probing probabilities `x^i_ĉ` for every user and estimate rank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplorationPlan {
    gamma: f64,
    users: Vec<UserPlan>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserPlan {
    pub x: Vec<f64>,
}

/// Solves the min-max exploration problem for every user.
///
/// Per user, estimates are visited in increasing marginal order. An estimate
/// too rare to reach the even share of the remaining budget is probed always
/// (`x = 1`) and its mass leaves the budget; once an estimate can reach the
/// even share, the remaining budget is split evenly in `P·x` across it and all
/// more likely estimates.
pub fn solve_exploration_plan(marginals: &[Vec<f64>], gamma: f64, n_users: usize) -> Result<ExplorationPlan> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Parameter(format!("gamma must lie in (0,1), got {gamma}")));
    }
    if n_users == 0 || marginals.len() != n_users {
        return Err(Error::UnsupportedDimension { expected: n_users, actual: marginals.len() });
    }
    let users = marginals
        .iter()
        .enumerate()
        .map(|(user, p)| {
            validate_marginal(user, p)?;
            Ok(UserPlan { x: water_fill(p, gamma) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExplorationPlan { gamma, users })
}

fn validate_marginal(user: usize, p: &[f64]) -> Result<()> {
    if p.is_empty() || p.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(Error::Parameter(format!("user {user}: marginal is not a distribution")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!("user {user}: marginal sums to {sum}")));
    }
    Ok(())
}

fn water_fill(p: &[f64], gamma: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut x = vec![1.0; p.len()];
    let mut budget = gamma;
    let mut remaining = p.len();
    for (k, &est) in order.iter().enumerate() {
        let share = budget / remaining as f64;
        if p[est] >= share {
            for &rest in &order[k..] {
                x[rest] = share / p[rest];
            }
            break;
        }
        budget -= p[est];
        remaining -= 1;
    }
    x
}

impl ExplorationPlan {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_rates(&self) -> usize {
        self.users[0].x.len()
    }

    pub fn users(&self) -> &[UserPlan] {
        &self.users
    }

    pub fn x(&self, user: usize, estimate: usize) -> f64 {
        self.users[user].x[estimate]
    }

    /// Learning rate `η = P(Ĉ = ĉ)·x/N` of one (user, estimate) pair.
    pub fn eta(&self, user: usize, estimate: usize, marginal: f64) -> f64 {
        marginal * self.x(user, estimate) / self.n_users() as f64
    }

    /// The user's slowest `P(Ĉ = ĉ)·x_ĉ`.
    pub fn bottleneck(&self, user: usize, marginal: &[f64]) -> f64 {
        marginal.iter().zip(&self.users[user].x).map(|(p, x)| p * x).fold(f64::INFINITY, f64::min)
    }

    /// Probability that a slot with these estimates is spent exploring.
    pub fn exploration_probability(&self, estimates: &[usize]) -> f64 {
        let n = self.n_users() as f64;
        estimates.iter().enumerate().map(|(user, &e)| self.x(user, e) / n).sum()
    }
}

/// Optimal bottleneck value `min(γ/|S|, min_ĉ P(Ĉ = ĉ))`.
pub fn bottleneck_oracle(marginal: &[f64], gamma: f64) -> f64 {
    let p_min = marginal.iter().copied().fold(f64::INFINITY, f64::min);
    (gamma / marginal.len() as f64).min(p_min)
}

/// Exploration counters: trials and successes per (user, estimate, rate).
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalStats {
    n_users: usize,
    n_rates: usize,
    trials: Vec<u64>,
    successes: Vec<u64>,
    slot: u64,
}

impl EmpiricalStats {
    pub fn new(n_users: usize, n_rates: usize) -> Self {
        let cells = n_users * n_rates * n_rates;
        Self { n_users, n_rates, trials: vec![0; cells], successes: vec![0; cells], slot: 0 }
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_rates(&self) -> usize {
        self.n_rates
    }

    fn cell(&self, user: usize, estimate: usize, rate: usize) -> usize {
        (user * self.n_rates + estimate) * self.n_rates + rate
    }

    /// Adds one probe outcome `ξ = 1(C ≥ r)`.
    pub fn record_exploration(&mut self, user: usize, estimate: usize, rate: usize, success: bool) {
        self.record_batch(user, estimate, rate, 1, u64::from(success));
    }

    pub fn record_batch(&mut self, user: usize, estimate: usize, rate: usize, trials: u64, successes: u64) {
        debug_assert!(successes <= trials);
        let c = self.cell(user, estimate, rate);
        self.trials[c] += trials;
        self.successes[c] += successes;
    }

    pub fn trials(&self, user: usize, estimate: usize, rate: usize) -> u64 {
        self.trials[self.cell(user, estimate, rate)]
    }

    pub fn successes(&self, user: usize, estimate: usize, rate: usize) -> u64 {
        self.successes[self.cell(user, estimate, rate)]
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn tick(&mut self) {
        self.slot += 1;
    }

    /// `P̂(C ≥ r | Ĉ = ĉ)`: the success frequency, or before any probe the
    /// uniform-channel prior `(|S| - k + 1)/|S|` for the rate of rank `k` (1-based).
    pub fn empirical_success(&self, user: usize, estimate: usize, rate: usize) -> f64 {
        let c = self.cell(user, estimate, rate);
        match self.trials[c] {
            0 => (self.n_rates - rate) as f64 / self.n_rates as f64,
            n => self.successes[c] as f64 / n as f64,
        }
    }
}

/// Outcome of the explore-or-transmit coin.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotChoice {
    Explore { user: usize, rate: usize },
    Transmit,
}

/// Chooses user `i` for exploration with probability `x^i_{ĉ_i}/N`,
/// otherwise transmits; probe rates are uniform over the rate space.
pub fn decide_slot<R: Rng + ?Sized>(plan: &ExplorationPlan, estimates: &[usize], rng: &mut R) -> SlotChoice {
    let n = plan.n_users() as f64;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (user, &est) in estimates.iter().enumerate() {
        acc += plan.x(user, est) / n;
        if u < acc {
            let rate = rng.random_range(0..plan.n_rates());
            return SlotChoice::Explore { user, rate };
        }
    }
    SlotChoice::Transmit
}

/// Learning-policy outcome for one slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LearningDecision {
    Explore { user: usize, rate: usize },
    Schedule(Decision),
}

/// Max-weight on the empirical table: rates `argmax_r P̂(C ≥ r | ĉ)·r`, raw
/// estimates used as they are (no monotonicity repair).
pub fn schedule_empirical(rates: &RateSpace, stats: &EmpiricalStats, queues: &QueueVector, estimates: &[usize]) -> Decision {
    max_weight(queues, |user| best_rate(rates, |r| stats.empirical_success(user, estimates[user], r)))
}

/// One slot of the learning policy.
pub fn schedule_learning<R: Rng + ?Sized>(
    plan: &ExplorationPlan,
    stats: &EmpiricalStats,
    rates: &RateSpace,
    queues: &QueueVector,
    estimates: &[usize],
    rng: &mut R,
) -> LearningDecision {
    match decide_slot(plan, estimates, rng) {
        SlotChoice::Explore { user, rate } => LearningDecision::Explore { user, rate },
        SlotChoice::Transmit => LearningDecision::Schedule(schedule_empirical(rates, stats, queues, estimates)),
    }
}

/// Iterated-logarithm envelope `sqrt(2σ² loglog(m)/m)` with `m = ηt/|S|`
/// and `σ² = p(1-p)`; `None` while `m ≤ e`.
pub fn lil_envelope(p: f64, eta: f64, n_rates: usize, t: f64) -> Option<f64> {
    let m = eta * t / n_rates as f64;
    if !(m > std::f64::consts::E) {
        return None;
    }
    Some((2.0 * p * (1.0 - p) * m.ln().ln() / m).sqrt())
}

/// `(P̂ - p)` over the envelope. With `σ = 0` the value is exactly 0 when the
/// estimate is exact and infinite otherwise.
pub fn normalized_deviation(estimate: f64, p: f64, eta: f64, n_rates: usize, t: f64) -> Option<f64> {
    let envelope = lil_envelope(p, eta, n_rates, t)?;
    let diff = estimate - p;
    Some(if diff == 0.0 {
        0.0
    } else if envelope == 0.0 {
        diff.signum() * f64::INFINITY
    } else {
        diff / envelope
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LilRecord {
    pub t: u64,
    pub user: usize,
    pub estimate: usize,
    pub rate: usize,
    pub deviation: f64,
    pub envelope: f64,
}

/// Normalized-deviation traces against a known (oracle) success table.
#[derive(Clone, Debug)]
pub struct LilDiagnostic {
    n_rates: usize,
    records: Vec<LilRecord>,
    running_max: Vec<f64>,
}

impl LilDiagnostic {
    pub fn new(n_users: usize, n_rates: usize) -> Self {
        Self { n_rates, records: Vec::new(), running_max: vec![0.0; n_users * n_rates * n_rates] }
    }

    /// Records every probed (user, estimate, rate) triple at slot `t`.
    /// Triples without probes or with an undefined envelope are skipped.
    pub fn observe(&mut self, t: u64, stats: &EmpiricalStats, truth: &SuccessTable, plan: &ExplorationPlan) {
        let n = self.n_rates;
        for user in 0..stats.n_users() {
            for &est in truth.domain(user) {
                let eta = plan.eta(user, est, truth.marginal(user, est));
                for rate in 0..n {
                    if stats.trials(user, est, rate) == 0 {
                        continue;
                    }
                    let p = truth.success(user, est, rate).expect("estimate is in the domain");
                    let phat = stats.empirical_success(user, est, rate);
                    let (Some(deviation), Some(envelope)) =
                        (normalized_deviation(phat, p, eta, n, t as f64), lil_envelope(p, eta, n, t as f64))
                    else {
                        continue;
                    };
                    let cell = (user * n + est) * n + rate;
                    self.running_max[cell] = self.running_max[cell].max(deviation.abs());
                    self.records.push(LilRecord { t, user, estimate: est, rate, deviation, envelope });
                }
            }
        }
    }

    pub fn records(&self) -> &[LilRecord] {
        &self.records
    }

    pub fn running_max(&self, user: usize, estimate: usize, rate: usize) -> f64 {
        self.running_max[(user * self.n_rates + estimate) * self.n_rates + rate]
    }

    /// `t,user,estimate_rank,rate_rank,normalized_deviation` with 1-based ranks.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,user,estimate_rank,rate_rank,normalized_deviation\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{},{}", r.t, r.user, r.estimate + 1, r.rate + 1, sig17(r.deviation));
        }
        out
    }

    /// `t,user,estimate_rank,rate_rank,envelope` companion of [`to_csv`](Self::to_csv).
    pub fn envelope_csv(&self) -> String {
        let mut out = String::from("t,user,estimate_rank,rate_rank,envelope\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{},{}", r.t, r.user, r.estimate + 1, r.rate + 1, sig17(r.envelope));
        }
        out
    }
}

/// About `per_decade` logarithmically spaced slots in `[1, horizon]`, always ending at `horizon`.
pub fn log_spaced_times(horizon: u64, per_decade: usize) -> Vec<u64> {
    let mut times = Vec::new();
    if horizon == 0 {
        return times;
    }
    let steps = ((horizon as f64).log10() * per_decade as f64).ceil() as usize;
    for k in 0..=steps {
        let t = 10f64.powf(k as f64 / per_decade as f64).round() as u64;
        let t = t.clamp(1, horizon);
        if times.last() != Some(&t) {
            times.push(t);
        }
    }
    if times.last() != Some(&horizon) {
        times.push(horizon);
    }
    times
}

/// One checkpoint of a single (user, estimate, rate) probe stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamPoint {
    pub t: u64,
    pub trials: u64,
    pub successes: u64,
    pub deviation: Option<f64>,
}

/// Simulates the probe stream of one (user, estimate, rate) triple in
/// isolation: each slot the triple is probed with probability `eta/|S|` and
/// each probe succeeds with probability `p`. Counts between checkpoints are
/// drawn as binomials, so long horizons cost one draw per checkpoint.
pub fn probe_stream_trace<R: Rng + ?Sized>(p: f64, eta: f64, n_rates: usize, times: &[u64], rng: &mut R) -> Vec<StreamPoint> {
    let per_slot = eta / n_rates as f64;
    let mut stats = EmpiricalStats::new(1, 1);
    let mut last = 0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let probes = Binomial::new(t - last, per_slot).expect("valid probe probability").sample(rng);
        let wins = Binomial::new(probes, p).expect("valid success probability").sample(rng);
        stats.record_batch(0, 0, 0, probes, wins);
        last = t;
        let trials = stats.trials(0, 0, 0);
        let deviation = if trials == 0 {
            None
        } else {
            normalized_deviation(stats.successes(0, 0, 0) as f64 / trials as f64, p, eta, n_rates, t as f64)
        };
        out.push(StreamPoint { t, trials, successes: stats.successes(0, 0, 0), deviation });
    }
    out
}
