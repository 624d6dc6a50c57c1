//! Scheduling with rate adaptation for single-hop downlink queueing networks
//! when the scheduler only sees noisy channel estimates.
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`]: finite rate spaces, channel/estimator joint statistics, the
//!   conditional success tables derived from them, and per-slot sampling.
//! - [`policy`]: rate adaptation and the max-weight schedulers (the
//!   throughput-optimal one and the one that trusts estimates blindly).
//! - [`region`]: stability-region geometry, membership and achievability.
//! - [`learner`]: the explore/transmit policy that learns the conditional
//!   statistics online, its min-max exploration plan and convergence diagnostics.
//! - [`sim`]: the discrete-time queueing engine and replication harness.

pub mod channel;
mod error;
pub mod fmt;
pub mod learner;
pub mod policy;
pub mod region;
pub mod sim;

pub use channel::{ChannelDraw, JointSampler, JointStatistics, RateSpace, SuccessTable};
pub use error::{Error, Result};
pub use learner::{EmpiricalStats, ExplorationPlan, SlotChoice};
pub use policy::{Decision, QueueVector};
pub use region::{RatePoint, RegionTerms};
