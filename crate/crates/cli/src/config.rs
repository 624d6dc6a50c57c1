//! Scenario configuration: one JSON document, optionally overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use csi_sched::channel::rayleigh_mmse_statistics;
use csi_sched::sim::{ArrivalSpec, PolicySpec, Scenario};
use csi_sched::{JointStatistics, RateSpace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSource {
    /// Joint tables given directly. A single table is shared by every user.
    Inline { statistics: JointStatistics },
    /// Monte-Carlo tables of Rayleigh fading with MMSE estimation, quantized
    /// down onto the configured rates.
    RayleighMmse { snr: f64, beta: f64, samples: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Psi,
    Naive,
    Learning,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub channel: ChannelSource,
    pub users: usize,
    pub rates: Vec<f64>,
    pub policy: PolicyKind,
    /// Exploration fraction; required by the learning policy, `region` and `plan`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub arrivals: ArrivalSpec,
    pub horizon: u64,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Metrics sampling period; defaults to `horizon / 200`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<u64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub exploration_serves: bool,
}

fn one() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line values that replace top-level keys.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub horizon: Option<u64>,
    pub gamma: Option<f64>,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(reps) = o.reps {
            self.replications = reps;
        }
        if let Some(horizon) = o.horizon {
            self.horizon = horizon;
        }
        if let Some(gamma) = o.gamma {
            self.gamma = Some(gamma);
        }
    }

    /// SHA-256 of the compact JSON form without `out_dir`, in hex.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        value.as_object_mut().expect("config is an object").remove("out_dir");
        let digest = Sha256::digest(value.to_string());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn gamma(&self) -> Result<f64> {
        let Some(g) = self.gamma else { bail!("this command needs \"gamma\"") };
        ensure!(g > 0.0 && g < 1.0, "gamma must lie in (0,1), got {g}");
        Ok(g)
    }

    pub fn rate_space(&self) -> Result<RateSpace> {
        Ok(RateSpace::new(self.rates.clone())?)
    }

    /// Joint statistics for `users` users.
    pub fn statistics(&self) -> Result<JointStatistics> {
        ensure!(self.users >= 1, "users must be at least 1");
        let rates = self.rate_space()?;
        let js = match &self.channel {
            ChannelSource::Inline { statistics } => {
                ensure!(
                    statistics.rates() == &rates,
                    "inline statistics use rates {:?}, config has {:?}",
                    statistics.rates().rates(),
                    self.rates
                );
                statistics.clone()
            }
            ChannelSource::RayleighMmse { snr, beta, samples, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rayleigh_mmse_statistics(*snr, *beta, &rates, *samples, &mut rng)?
            }
        };
        match js.n_users() {
            n if n == self.users => Ok(js),
            1 => Ok(js.replicate(self.users)),
            n => bail!("statistics describe {n} users, config has {}", self.users),
        }
    }

    /// Checks everything every subcommand relies on.
    pub fn validate(&self) -> Result<()> {
        self.scenario().map(|_| ())
    }

    /// The simulation scenario, fully validated.
    pub fn scenario(&self) -> Result<Scenario> {
        let stats = self.statistics()?;
        let policy = match self.policy {
            PolicyKind::Psi => PolicySpec::Psi,
            PolicyKind::Naive => PolicySpec::Naive,
            PolicyKind::Learning => PolicySpec::Learning { gamma: self.gamma()? },
        };
        ensure!(self.replications >= 1, "replications must be at least 1");
        let mut scenario = Scenario::new(stats, policy, self.arrivals.clone(), self.horizon);
        if let Some(stride) = self.stride {
            scenario = scenario.with_stride(stride);
        }
        scenario.exploration_serves = self.exploration_serves;
        scenario.validate()?;
        Ok(scenario)
    }
}
