//! Rate adaptation and the max-weight schedulers.
//!
//! Ties are broken deterministically: the smallest rate among expected-value
//! maximizers, and the lowest user index among weight maximizers.

use crate::channel::{RateSpace, SuccessTable};
use crate::error::Result;

/// Per-user queue lengths in packets.
pub type QueueVector = [u64];

/// One slot's scheduling outcome under the one-hop interference model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decision {
    Idle,
    Transmit {
        user: usize,
        /// Rank of the transmission rate.
        rate: usize,
        /// `Q_user · p · r`, the weight that won (diagnostic only).
        weight: f64,
    },
}

impl Decision {
    pub fn user(&self) -> Option<usize> {
        match *self {
            Decision::Idle => None,
            Decision::Transmit { user, .. } => Some(user),
        }
    }

    /// Same user and rate, ignoring the diagnostic weight.
    pub fn same_action(&self, other: &Decision) -> bool {
        match (self, other) {
            (Decision::Idle, Decision::Idle) => true,
            (
                Decision::Transmit { user: u1, rate: r1, .. },
                Decision::Transmit { user: u2, rate: r2, .. },
            ) => u1 == u2 && r1 == r2,
            _ => false,
        }
    }
}

/// `argmax_r success(r)·r` over the rate space, returning `(rank, value)`.
///
/// `success` is not assumed monotone in the rate.
pub fn best_rate(rates: &RateSpace, mut success: impl FnMut(usize) -> f64) -> (usize, f64) {
    let mut best = (0, success(0) * rates.rate(0));
    for rank in 1..rates.len() {
        let value = success(rank) * rates.rate(rank);
        if value > best.1 {
            best = (rank, value);
        }
    }
    best
}

/// The expected-rate maximizer `r*` for `user` given estimate rank `estimate`.
pub fn rate_adapt(st: &SuccessTable, user: usize, estimate: usize) -> Result<(usize, f64)> {
    let row = st.row(user, estimate)?;
    Ok(best_rate(st.rates(), |r| row[r]))
}

/// Max-weight selection over per-user `(rate, value)` offers.
pub fn max_weight(queues: &QueueVector, mut offer: impl FnMut(usize) -> (usize, f64)) -> Decision {
    let mut decision = Decision::Idle;
    let mut best = 0.0;
    for (user, &q) in queues.iter().enumerate() {
        if q == 0 {
            continue;
        }
        let (rate, value) = offer(user);
        let weight = q as f64 * value;
        if weight > best {
            best = weight;
            decision = Decision::Transmit { user, rate, weight };
        }
    }
    decision
}

/// The throughput-optimal scheduler: serve `argmax_i Q_i·v*_i(ĉ_i)` at `r*_i(ĉ_i)`.
pub fn schedule_psi(st: &SuccessTable, queues: &QueueVector, estimates: &[usize]) -> Result<Decision> {
    let offers = (0..queues.len())
        .map(|user| rate_adapt(st, user, estimates[user]))
        .collect::<Result<Vec<_>>>()?;
    Ok(max_weight(queues, |user| offers[user]))
}

/// The scheduler that takes estimates at face value: weight `Q_i·ĉ_i`, rate `ĉ_i`.
pub fn schedule_naive(rates: &RateSpace, queues: &QueueVector, estimates: &[usize]) -> Decision {
    max_weight(queues, |user| (estimates[user], rates.rate(estimates[user])))
}
