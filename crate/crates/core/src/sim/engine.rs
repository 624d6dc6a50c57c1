//! Per-slot queue dynamics `Q[t+1] = [Q[t] - μ[t]]⁺ + A[t]` in integer packets.

use std::collections::VecDeque;

use crate::channel::ChannelDraw;

/// What the scheduler does with one slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotAction {
    Idle,
    Transmit { user: usize, rate: usize },
    Explore { user: usize, rate: usize },
}

/// Cumulative per-user counters; every field only grows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    pub arrivals: u64,
    pub departures: u64,
    /// Data transmissions attempted on a nonempty queue.
    pub attempts: u64,
    pub successes: u64,
    pub outages: u64,
    pub explorations: u64,
    /// Sum over departed packets of their slots spent in the queue.
    pub delay_sum: u64,
    /// Sum over departed packets of their failed transmissions.
    pub retx_sum: u64,
}

impl Counters {
    pub fn add(&mut self, other: &Counters) {
        self.arrivals += other.arrivals;
        self.departures += other.departures;
        self.attempts += other.attempts;
        self.successes += other.successes;
        self.outages += other.outages;
        self.explorations += other.explorations;
        self.delay_sum += other.delay_sum;
        self.retx_sum += other.retx_sum;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Run {
    arrival: u64,
    retx: u64,
    count: u64,
}

#[derive(Clone, Debug, Default)]
struct UserQueue {
    runs: VecDeque<Run>,
    len: u64,
    counters: Counters,
}

impl UserQueue {
    /// Removes up to `k` head packets departing at `slot`; returns how many left.
    fn serve(&mut self, k: u64, slot: u64) -> u64 {
        let mut left = k.min(self.len);
        let served = left;
        while left > 0 {
            let head = self.runs.front_mut().expect("queue length tracks runs");
            let take = head.count.min(left);
            self.counters.delay_sum += take * (slot - head.arrival);
            self.counters.retx_sum += take * head.retx;
            head.count -= take;
            left -= take;
            if head.count == 0 {
                self.runs.pop_front();
            }
        }
        self.len -= served;
        self.counters.departures += served;
        served
    }

    /// Charges one failed transmission to the first `k` head packets.
    fn fail(&mut self, k: u64) {
        let mut left = k.min(self.len);
        let mut i = 0;
        while left > 0 {
            let run = self.runs[i];
            if run.count > left {
                self.runs[i].count -= left;
                self.runs.insert(i, Run { retx: run.retx + 1, count: left, ..run });
                break;
            }
            self.runs[i].retx += 1;
            left -= run.count;
            i += 1;
        }
    }

    fn push(&mut self, count: u64, slot: u64) {
        if count == 0 {
            return;
        }
        self.runs.push_back(Run { arrival: slot, retx: 0, count });
        self.len += count;
        self.counters.arrivals += count;
    }
}

/// FIFO queues with arrival stamps, in units of `1/unit_scale` packets.
#[derive(Clone, Debug)]
pub struct QueueEngineState {
    queues: Vec<UserQueue>,
    /// Packets carried by one successful transmission at each rate rank.
    rate_packets: Vec<u64>,
    exploration_serves: bool,
    slot: u64,
}

/// Service outcome of one slot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepOutcome {
    pub departures: u64,
    /// Transmission or probe was at a rate the channel supported.
    pub success: Option<bool>,
}

impl QueueEngineState {
    pub fn new(n_users: usize, rate_packets: Vec<u64>) -> Self {
        Self { queues: vec![UserQueue::default(); n_users], rate_packets, exploration_serves: false, slot: 0 }
    }

    /// Successful probes also drain the queue (off by default).
    pub fn with_exploration_service(mut self, serves: bool) -> Self {
        self.exploration_serves = serves;
        self
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn n_users(&self) -> usize {
        self.queues.len()
    }

    pub fn len(&self, user: usize) -> u64 {
        self.queues[user].len
    }

    pub fn lengths(&self) -> impl Iterator<Item = u64> + '_ {
        self.queues.iter().map(|q| q.len)
    }

    pub fn counters(&self, user: usize) -> &Counters {
        &self.queues[user].counters
    }

    /// Advances one slot: service first, then arrivals.
    ///
    /// A transmission at rate rank `R` to user `i` succeeds iff `R ≤ C_i`; on
    /// success `min(R, Q_i)` head packets depart, on outage nothing departs and
    /// the packets that were sent are charged a retransmission.
    pub fn step(&mut self, action: SlotAction, draw: &ChannelDraw, arrivals: &[u64]) -> StepOutcome {
        let slot = self.slot;
        let mut outcome = StepOutcome::default();
        match action {
            SlotAction::Idle => {}
            SlotAction::Transmit { user, rate } => {
                let q = &mut self.queues[user];
                if q.len > 0 {
                    let ok = rate <= draw.states[user];
                    q.counters.attempts += 1;
                    if ok {
                        q.counters.successes += 1;
                        outcome.departures = q.serve(self.rate_packets[rate], slot);
                    } else {
                        q.counters.outages += 1;
                        q.fail(self.rate_packets[rate]);
                    }
                    outcome.success = Some(ok);
                }
            }
            SlotAction::Explore { user, rate } => {
                let ok = rate <= draw.states[user];
                let q = &mut self.queues[user];
                q.counters.explorations += 1;
                if ok && self.exploration_serves {
                    outcome.departures = q.serve(self.rate_packets[rate], slot);
                }
                outcome.success = Some(ok);
            }
        }
        for (q, &a) in self.queues.iter_mut().zip(arrivals) {
            q.push(a, slot);
        }
        self.slot += 1;
        outcome
    }
}
