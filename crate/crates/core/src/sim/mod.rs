//! Discrete-time simulation of the downlink under a chosen scheduler.
//!
//! Every slot runs the same sequence on one seeded ChaCha stream: draw the
//! channel, decide, serve, then append arrivals. Rates are fractional in
//! general, so queues count packets of size `1/unit_scale` where `unit_scale`
//! is the smallest integer making every rate integral
//! ([`RateSpace::unit_scale`]); reported queue lengths and departures are
//! converted back to whole packets.

mod arrivals;
mod engine;
pub mod metrics;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{ChannelDraw, JointSampler, JointStatistics, RateSpace, SuccessTable};
use crate::error::{Error, Result};
use crate::learner::{schedule_learning, solve_exploration_plan, EmpiricalStats, ExplorationPlan, LearningDecision};
use crate::policy::{max_weight, rate_adapt, schedule_naive, Decision};
use crate::region::{AchievabilityWeights, RegionTerms};

pub use arrivals::{ArrivalProcess, ArrivalSpec};
use arrivals::ArrivalSampler;
pub use engine::{Counters, QueueEngineState, SlotAction, StepOutcome};
pub use metrics::{average, Metrics, Series, AGGREGATE};

/// Caps the worker threads used by [`run_replications`].
pub const THREADS_ENV: &str = "CSI_SCHED_THREADS";

#[derive(Clone, Debug)]
pub enum PolicySpec {
    /// Max-weight with rate adaptation on the true conditional table.
    Psi,
    /// Max-weight that transmits at the estimated rate.
    Naive,
    /// Explore with probability governed by the min-max plan for `gamma`,
    /// otherwise max-weight on the empirical table.
    Learning { gamma: f64 },
    /// Stationary randomized policy given by achievability weights.
    Reference { region: RegionTerms, weights: AchievabilityWeights },
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub stats: JointStatistics,
    pub policy: PolicySpec,
    pub arrivals: ArrivalSpec,
    pub horizon: u64,
    /// Metrics sampling period in slots.
    pub stride: u64,
    /// Successful probes also drain the queue. Off by default: exploration
    /// slots carry no data.
    pub exploration_serves: bool,
}

impl Scenario {
    /// A scenario sampled about 200 times over its horizon.
    pub fn new(stats: JointStatistics, policy: PolicySpec, arrivals: ArrivalSpec, horizon: u64) -> Self {
        let stride = (horizon / 200).max(1);
        Self { stats, policy, arrivals, horizon, stride, exploration_serves: false }
    }

    pub fn with_stride(mut self, stride: u64) -> Self {
        self.stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        Prepared::new(self).map(|_| ())
    }
}

/// Validated, precomputed pieces shared by every replication.
struct Prepared {
    sampler: JointSampler,
    rate_packets: Vec<u64>,
    unit_scale: u64,
    arrivals: ArrivalSampler,
    policy: PreparedPolicy,
}

#[derive(Clone)]
enum PreparedPolicy {
    /// Best `(rate, value)` per user and estimate rank.
    Psi(Vec<Vec<(usize, f64)>>),
    Naive,
    Learning(ExplorationPlan),
    Reference(RegionTerms, AchievabilityWeights),
}

impl Prepared {
    fn new(s: &Scenario) -> Result<Self> {
        let n = s.stats.n_users();
        if s.horizon == 0 {
            return Err(Error::Config("horizon must be at least one slot".into()));
        }
        if s.stride == 0 {
            return Err(Error::Config("metrics stride must be positive".into()));
        }
        if s.arrivals.rates.len() != n {
            return Err(Error::Config(format!("{} arrival rates for {n} users", s.arrivals.rates.len())));
        }
        let rates = s.stats.rates();
        let unit_scale = rates.unit_scale()?;
        let rate_packets = (0..rates.len()).map(|r| rates.scaled(r, unit_scale)).collect();
        let arrivals = ArrivalSampler::new(&s.arrivals, unit_scale)?;
        let st = s.stats.success_table()?;
        let policy = match &s.policy {
            PolicySpec::Psi => PreparedPolicy::Psi(best_offers(&st)?),
            PolicySpec::Naive => PreparedPolicy::Naive,
            PolicySpec::Learning { gamma } => {
                let marginals: Vec<Vec<f64>> = (0..n).map(|u| st.marginals(u).to_vec()).collect();
                PreparedPolicy::Learning(solve_exploration_plan(&marginals, *gamma, n)?)
            }
            PolicySpec::Reference { region, weights } => {
                if region.n_users() != n || weights.alpha.len() != region.terms().len() {
                    return Err(Error::Config("reference policy does not match the statistics".into()));
                }
                PreparedPolicy::Reference(region.clone(), weights.clone())
            }
        };
        Ok(Self { sampler: s.stats.sampler(), rate_packets, unit_scale, arrivals, policy })
    }
}

fn best_offers(st: &SuccessTable) -> Result<Vec<Vec<(usize, f64)>>> {
    (0..st.n_users())
        .map(|user| {
            (0..st.rates().len())
                .map(|est| if st.in_domain(user, est) { rate_adapt(st, user, est) } else { Ok((0, 0.0)) })
                .collect()
        })
        .collect()
}

/// Everything that happened in one slot.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotTrace {
    pub slot: u64,
    pub draw: ChannelDraw,
    pub action: SlotAction,
    /// Arrivals in packet units of `1/unit_scale`.
    pub arrivals: Vec<u64>,
    pub outcome: StepOutcome,
    /// Queue lengths (packet units) before the slot.
    pub queues_before: Vec<u64>,
}

/// A single replication, advanced one slot at a time.
pub struct Simulation {
    prepared: Prepared,
    rates: RateSpace,
    engine: QueueEngineState,
    learning: Option<EmpiricalStats>,
    rng: ChaCha8Rng,
    draw: ChannelDraw,
    arrivals: Vec<u64>,
    queues: Vec<u64>,
}

impl Simulation {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self> {
        let prepared = Prepared::new(scenario)?;
        let n = scenario.stats.n_users();
        let rates = scenario.stats.rates().clone();
        let engine = QueueEngineState::new(n, prepared.rate_packets.clone())
            .with_exploration_service(scenario.exploration_serves);
        let learning = matches!(prepared.policy, PreparedPolicy::Learning(_)).then(|| EmpiricalStats::new(n, rates.len()));
        Ok(Self {
            prepared,
            rates,
            engine,
            learning,
            rng: ChaCha8Rng::seed_from_u64(seed),
            draw: ChannelDraw::default(),
            arrivals: vec![0; n],
            queues: vec![0; n],
        })
    }

    pub fn engine(&self) -> &QueueEngineState {
        &self.engine
    }

    pub fn unit_scale(&self) -> u64 {
        self.prepared.unit_scale
    }

    /// Learned counters (learning policy only).
    pub fn learning_stats(&self) -> Option<&EmpiricalStats> {
        self.learning.as_ref()
    }

    pub fn plan(&self) -> Option<&ExplorationPlan> {
        match &self.prepared.policy {
            PreparedPolicy::Learning(plan) => Some(plan),
            _ => None,
        }
    }

    /// Runs one slot and reports what happened.
    pub fn step(&mut self) -> SlotTrace {
        let slot = self.engine.slot();
        self.prepared.sampler.sample_into(&mut self.rng, &mut self.draw);
        for (q, len) in self.queues.iter_mut().zip(self.engine.lengths()) {
            *q = len;
        }
        let estimates = &self.draw.estimates;
        let action = match &self.prepared.policy {
            PreparedPolicy::Psi(offers) => to_action(max_weight(&self.queues, |u| offers[u][estimates[u]])),
            PreparedPolicy::Naive => to_action(schedule_naive(&self.rates, &self.queues, estimates)),
            PreparedPolicy::Learning(plan) => {
                let stats = self.learning.as_ref().expect("learning stats exist");
                match schedule_learning(plan, stats, &self.rates, &self.queues, estimates, &mut self.rng) {
                    LearningDecision::Explore { user, rate } => SlotAction::Explore { user, rate },
                    LearningDecision::Schedule(d) => to_action(d),
                }
            }
            PreparedPolicy::Reference(region, weights) => to_action(weights.decide(region, estimates, &mut self.rng)),
        };
        self.prepared.arrivals.sample_into(&mut self.rng, &mut self.arrivals);
        let outcome = self.engine.step(action, &self.draw, &self.arrivals);
        if let (SlotAction::Explore { user, rate }, Some(stats)) = (action, self.learning.as_mut()) {
            stats.record_exploration(user, self.draw.estimates[user], rate, outcome.success == Some(true));
        }
        if let Some(stats) = self.learning.as_mut() {
            stats.tick();
        }
        SlotTrace {
            slot,
            draw: self.draw.clone(),
            action,
            arrivals: self.arrivals.clone(),
            outcome,
            queues_before: self.queues.clone(),
        }
    }

    /// Advances without building traces.
    fn advance(&mut self) {
        self.step();
    }
}

fn to_action(d: Decision) -> SlotAction {
    match d {
        Decision::Idle => SlotAction::Idle,
        Decision::Transmit { user, rate, .. } => SlotAction::Transmit { user, rate },
    }
}

/// One replication from slot 0 to the horizon.
pub fn run(scenario: &Scenario, seed: u64) -> Result<Metrics> {
    let mut sim = Simulation::new(scenario, seed)?;
    let mut recorder = metrics::Recorder::new(scenario.stats.n_users(), sim.unit_scale(), scenario.horizon);
    for t in 1..=scenario.horizon {
        sim.advance();
        if t % scenario.stride == 0 || t == scenario.horizon {
            recorder.sample(&sim.engine);
        }
    }
    Ok(recorder.finish(&sim.engine))
}

/// Worker threads allowed by [`THREADS_ENV`], if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// `n_reps` independent replications with seeds `base_seed + r`, averaged pointwise.
///
/// Replications run in parallel; results are combined in replication order,
/// so the output does not depend on scheduling.
pub fn run_replications(scenario: &Scenario, n_reps: usize, base_seed: u64) -> Result<Metrics> {
    if n_reps == 0 {
        return Err(Error::Config("at least one replication is required".into()));
    }
    scenario.validate()?;
    let work = || {
        (0..n_reps as u64)
            .into_par_iter()
            .map(|r| run(scenario, base_seed.wrapping_add(r)))
            .collect::<Result<Vec<_>>>()
    };
    let runs = match thread_cap() {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    Ok(average(&runs))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    Inconclusive,
}

/// Thresholds of the empirical stability test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityCriteria {
    /// Earlier window, as fractions of the horizon.
    pub early: (f64, f64),
    pub late: (f64, f64),
    /// Late/early mean ratio above which growth is flagged.
    pub growth_ratio: f64,
    /// Late/early mean ratio at or below which the queue counts as settled.
    pub settled_ratio: f64,
    /// Standard errors the fitted slope must clear to confirm growth.
    pub slope_se: f64,
}

impl Default for StabilityCriteria {
    fn default() -> Self {
        Self { early: (0.4, 0.6), late: (0.8, 1.0), growth_ratio: 1.5, settled_ratio: 1.2, slope_se: 3.0 }
    }
}

/// Classifies the total-queue series with the default criteria.
pub fn detect_stability(m: &Metrics) -> Stability {
    detect_stability_with(m, &StabilityCriteria::default())
}

/// Compares the mean total queue over two windows and fits a line through the
/// samples from the start of the early window on.
///
/// Unstable when the mean grows by more than `growth_ratio` and the slope is
/// positive by at least `slope_se` standard errors. Stable when the later mean
/// is within `settled_ratio` of the earlier, up to `slope_se` standard errors
/// of the difference of the two window means, so that nearly empty queues are
/// not judged on sampling noise. Otherwise inconclusive.
pub fn detect_stability_with(m: &Metrics, c: &StabilityCriteria) -> Stability {
    let Some(queue) = m.series(metrics::QUEUE, AGGREGATE) else {
        return Stability::Inconclusive;
    };
    let horizon = m.horizon as f64;
    let window = |(lo, hi): (f64, f64)| -> Vec<(f64, f64)> {
        m.slots
            .iter()
            .zip(&queue.values)
            .filter(|(&s, _)| s as f64 > lo * horizon && s as f64 <= hi * horizon)
            .map(|(&s, &v)| (s as f64, v))
            .collect()
    };
    let early = window(c.early);
    let late = window(c.late);
    if early.len() < 2 || late.len() < 2 {
        return Stability::Inconclusive;
    }
    let (early_mean, early_var) = mean_var(&early);
    let (late_mean, late_var) = mean_var(&late);
    if late_mean > c.growth_ratio * early_mean {
        if let Some((slope, se)) = ols_slope(&window((c.early.0, 1.0))) {
            if slope > 0.0 && slope >= c.slope_se * se {
                return Stability::Unstable;
            }
        }
    }
    let noise = (early_var / early.len() as f64 + late_var / late.len() as f64).sqrt();
    if late_mean <= c.settled_ratio * early_mean + c.slope_se * noise {
        return Stability::Stable;
    }
    Stability::Inconclusive
}

fn mean_var(w: &[(f64, f64)]) -> (f64, f64) {
    let n = w.len() as f64;
    let mean = w.iter().map(|p| p.1).sum::<f64>() / n;
    let var = w.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn ols_slope(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 3 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let rss: f64 = points.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    Some((slope, (rss / (n - 2.0) / sxx).sqrt()))
}
