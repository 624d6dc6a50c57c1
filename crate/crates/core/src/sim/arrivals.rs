//! Exogenous arrival processes.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalProcess {
    /// A batch of `batch` packets with probability `mean / batch`, else nothing.
    BernoulliBatch { batch: f64 },
    Poisson,
}

/// Per-user arrival process and mean rate `λ_i` (packets/slot).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalSpec {
    pub process: ArrivalProcess,
    pub rates: Vec<f64>,
}

impl ArrivalSpec {
    pub fn bernoulli(batch: f64, rates: Vec<f64>) -> Self {
        Self { process: ArrivalProcess::BernoulliBatch { batch }, rates }
    }

    pub fn poisson(rates: Vec<f64>) -> Self {
        Self { process: ArrivalProcess::Poisson, rates }
    }
}

/// Arrival sampler in units of `1/unit_scale` packets.
#[derive(Clone, Debug)]
pub(crate) enum ArrivalSampler {
    Bernoulli { batch: u64, probs: Vec<f64> },
    Poisson { dists: Vec<Option<Poisson<f64>>> },
}

impl ArrivalSampler {
    pub(crate) fn new(spec: &ArrivalSpec, unit_scale: u64) -> Result<Self> {
        if let Some(bad) = spec.rates.iter().find(|r| !r.is_finite() || **r < 0.0) {
            return Err(Error::Config(format!("arrival rate {bad} is not a nonnegative number")));
        }
        match spec.process {
            ArrivalProcess::BernoulliBatch { batch } => {
                let packets = batch * unit_scale as f64;
                if !(batch > 0.0) || (packets - packets.round()).abs() > 1e-9 * packets.max(1.0) {
                    return Err(Error::Config(format!(
                        "batch {batch} is not a positive multiple of the packet unit 1/{unit_scale}"
                    )));
                }
                let probs: Vec<f64> = spec.rates.iter().map(|r| r / batch).collect();
                if let Some(p) = probs.iter().find(|p| **p > 1.0) {
                    return Err(Error::Config(format!("arrival rate exceeds the batch size (probability {p})")));
                }
                Ok(Self::Bernoulli { batch: packets.round() as u64, probs })
            }
            ArrivalProcess::Poisson => {
                let dists = spec
                    .rates
                    .iter()
                    .map(|&r| (r > 0.0).then(|| Poisson::new(r * unit_scale as f64).expect("positive mean")))
                    .collect();
                Ok(Self::Poisson { dists })
            }
        }
    }

    pub(crate) fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [u64]) {
        match self {
            Self::Bernoulli { batch, probs } => {
                for (a, &p) in out.iter_mut().zip(probs) {
                    *a = if p > 0.0 && rng.random::<f64>() < p { *batch } else { 0 };
                }
            }
            Self::Poisson { dists } => {
                for (a, d) in out.iter_mut().zip(dists) {
                    *a = d.as_ref().map_or(0, |d| d.sample(rng) as u64);
                }
            }
        }
    }
}
