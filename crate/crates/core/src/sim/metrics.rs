//! Sampled time series and their replication averages.

use std::fmt::Write as _;

use super::engine::{Counters, QueueEngineState};
use crate::fmt::sig17;

pub const QUEUE: &str = "queue";
pub const DEPARTURES: &str = "departures";
pub const SUCCESS_PROB: &str = "success_prob";
pub const RETRANSMISSIONS: &str = "retransmissions";
pub const DELAY: &str = "delay";
pub const EXPLORE_FRAC: &str = "explore_frac";

/// User index of aggregate series.
pub const AGGREGATE: i64 = -1;

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub metric: &'static str,
    pub user: i64,
    pub values: Vec<f64>,
    /// Standard error across replications; zero for a single run.
    pub stderr: Vec<f64>,
}

/// Time series sampled every `stride` slots.
///
/// Queue lengths and departures are cumulative states in packets. The ratio
/// metrics (`success_prob`, `retransmissions`, `delay`, `explore_frac`) cover
/// the slots since the previous sample and are NaN when the window has no
/// events to average over.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    /// Slot count at each sample.
    pub slots: Vec<u64>,
    pub series: Vec<Series>,
    pub unit_scale: u64,
    pub horizon: u64,
    pub replications: usize,
    /// Per-user counters, summed over replications.
    pub totals: Vec<Counters>,
}

impl Metrics {
    pub fn series(&self, metric: &str, user: i64) -> Option<&Series> {
        self.series.iter().find(|s| s.metric == metric && s.user == user)
    }

    /// Value of `metric` at the sample taken after `slot` slots.
    pub fn value_at(&self, metric: &str, user: i64, slot: u64) -> Option<(f64, f64)> {
        let i = self.slots.iter().position(|&s| s == slot)?;
        let s = self.series(metric, user)?;
        Some((s.values[i], s.stderr[i]))
    }

    /// `slot,metric,user,value,stderr`, one row per sample and series.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("slot,metric,user,value,stderr\n");
        for (i, slot) in self.slots.iter().enumerate() {
            for s in &self.series {
                let _ = writeln!(out, "{slot},{},{},{},{}", s.metric, s.user, sig17(s.values[i]), sig17(s.stderr[i]));
            }
        }
        out
    }
}

pub(crate) struct Recorder {
    n_users: usize,
    scale: f64,
    prev: Counters,
    prev_slot: u64,
    metrics: Metrics,
}

impl Recorder {
    pub(crate) fn new(n_users: usize, unit_scale: u64, horizon: u64) -> Self {
        let mut series = Vec::new();
        let mut add = |metric, user| series.push(Series { metric, user, values: Vec::new(), stderr: Vec::new() });
        for user in 0..n_users as i64 {
            add(QUEUE, user);
        }
        add(QUEUE, AGGREGATE);
        for user in 0..n_users as i64 {
            add(DEPARTURES, user);
        }
        for metric in [SUCCESS_PROB, RETRANSMISSIONS, DELAY, EXPLORE_FRAC] {
            add(metric, AGGREGATE);
        }
        let metrics = Metrics {
            slots: Vec::new(),
            series,
            unit_scale,
            horizon,
            replications: 1,
            totals: vec![Counters::default(); n_users],
        };
        Self { n_users, scale: unit_scale as f64, prev: Counters::default(), prev_slot: 0, metrics }
    }

    pub(crate) fn sample(&mut self, engine: &QueueEngineState) {
        let n = self.n_users;
        let mut total = Counters::default();
        for user in 0..n {
            total.add(engine.counters(user));
        }
        let window = |now: u64, before: u64| now - before;
        let ratio = |num: u64, den: u64| if den == 0 { f64::NAN } else { num as f64 / den as f64 };
        let d_slots = engine.slot() - self.prev_slot;
        let mut values = Vec::with_capacity(self.metrics.series.len());
        let queues: Vec<f64> = engine.lengths().map(|q| q as f64 / self.scale).collect();
        values.extend(&queues);
        values.push(engine.lengths().sum::<u64>() as f64 / self.scale);
        values.extend((0..n).map(|u| engine.counters(u).departures as f64 / self.scale));
        let departed = window(total.departures, self.prev.departures);
        values.push(ratio(window(total.successes, self.prev.successes), window(total.attempts, self.prev.attempts)));
        values.push(ratio(window(total.retx_sum, self.prev.retx_sum), departed));
        values.push(ratio(window(total.delay_sum, self.prev.delay_sum), departed));
        values.push(ratio(window(total.explorations, self.prev.explorations), d_slots));

        for (s, v) in self.metrics.series.iter_mut().zip(values) {
            s.values.push(v);
            s.stderr.push(0.0);
        }
        self.metrics.slots.push(engine.slot());
        self.prev = total;
        self.prev_slot = engine.slot();
    }

    pub(crate) fn finish(mut self, engine: &QueueEngineState) -> Metrics {
        self.metrics.totals = (0..self.n_users).map(|u| *engine.counters(u)).collect();
        self.metrics
    }
}

/// Pointwise mean and standard error over replications, in the given order.
///
/// NaN entries (empty windows) are left out of their point's average.
pub fn average(runs: &[Metrics]) -> Metrics {
    let first = &runs[0];
    let mut out = first.clone();
    out.replications = runs.iter().map(|m| m.replications).sum();
    for user in 0..out.totals.len() {
        let mut t = Counters::default();
        for m in runs {
            t.add(&m.totals[user]);
        }
        out.totals[user] = t;
    }
    for (k, series) in out.series.iter_mut().enumerate() {
        for i in 0..first.slots.len() {
            let (mut count, mut sum) = (0usize, 0.0);
            for m in runs {
                let v = m.series[k].values[i];
                if !v.is_nan() {
                    count += 1;
                    sum += v;
                }
            }
            if count == 0 {
                series.values[i] = f64::NAN;
                series.stderr[i] = f64::NAN;
                continue;
            }
            let mean = sum / count as f64;
            let sq: f64 = runs
                .iter()
                .map(|m| m.series[k].values[i])
                .filter(|v| !v.is_nan())
                .map(|v| (v - mean).powi(2))
                .sum();
            series.values[i] = mean;
            series.stderr[i] = if count > 1 { (sq / (count - 1) as f64 / count as f64).sqrt() } else { 0.0 };
        }
    }
    out
}
