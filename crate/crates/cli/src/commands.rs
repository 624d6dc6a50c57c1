//! The subcommands. Each builds all of its artifacts in memory first, so a
//! failing command leaves the output directory untouched.

use std::path::Path;

use anyhow::{bail, Context, Result};
use csi_sched::learner::{bottleneck_oracle, log_spaced_times, solve_exploration_plan, LilDiagnostic};
use csi_sched::region::{boundary_2d, boundary_csv, region_full, region_naive, scale_region};
use csi_sched::sim::{detect_stability, run_replications, PolicySpec, Simulation, Stability};
use serde_json::json;

use crate::config::{ChannelSource, ScenarioConfig};

/// Files a command produces, in write order.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
    pub warnings: Vec<String>,
    /// Verdict of `simulate`.
    pub stability: Option<Stability>,
}

impl Artifacts {
    fn add(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), contents.into()));
    }

    fn add_json(&mut self, name: &str, value: &serde_json::Value) {
        let mut text = serde_json::to_string_pretty(value).expect("JSON value serializes");
        text.push('\n');
        self.add(name, text);
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        for (name, contents) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

pub fn stability_name(s: Stability) -> &'static str {
    match s {
        Stability::Stable => "stable",
        Stability::Unstable => "unstable",
        Stability::Inconclusive => "inconclusive",
    }
}

/// `region_full.csv`, `region_naive.csv`, `region_scaled.csv` and `corners.json`.
pub fn region(cfg: &ScenarioConfig) -> Result<Artifacts> {
    cfg.validate()?;
    let gamma = cfg.gamma()?;
    let st = cfg.statistics()?.success_table()?;
    let n = cfg.users;
    let full = region_full(&st, n)?;
    let naive = region_naive(&st, n)?;
    let scaled = scale_region(&full, gamma)?;
    let mut out = Artifacts::default();
    if n == 2 {
        out.add("region_full.csv", boundary_csv(&boundary_2d(&full)?));
        out.add("region_naive.csv", boundary_csv(&boundary_2d(&naive)?));
        out.add("region_scaled.csv", boundary_csv(&boundary_2d(&scaled)?));
    } else {
        out.warnings.push(format!("boundary output needs exactly 2 users, config has {n}; writing corners only"));
    }
    let corners = json!({
        "users": n,
        "gamma": gamma,
        "full": full.corners(),
        "naive": naive.corners(),
        "scaled": scaled.corners(),
        "warnings": out.warnings,
    });
    out.add_json("corners.json", &corners);
    Ok(out)
}

/// `plan.json` and the bottleneck report `plan_report.json`.
pub fn plan(cfg: &ScenarioConfig) -> Result<Artifacts> {
    cfg.validate()?;
    let gamma = cfg.gamma()?;
    let st = cfg.statistics()?.success_table()?;
    let marginals: Vec<Vec<f64>> = (0..cfg.users).map(|u| st.marginals(u).to_vec()).collect();
    let plan = solve_exploration_plan(&marginals, gamma, cfg.users)?;
    let users: Vec<_> = marginals
        .iter()
        .enumerate()
        .map(|(u, p)| {
            let eta: Vec<f64> = (0..p.len()).map(|e| plan.eta(u, e, p[e])).collect();
            json!({
                "user": u,
                "marginals": p,
                "x": plan.users()[u].x,
                "eta": eta,
                "bottleneck": plan.bottleneck(u, p),
                "bottleneck_oracle": bottleneck_oracle(p, gamma),
            })
        })
        .collect();
    let mut out = Artifacts::default();
    out.add_json("plan.json", &serde_json::to_value(&plan)?);
    out.add_json("plan_report.json", &json!({ "gamma": gamma, "users": users }));
    Ok(out)
}

/// `metrics.csv` and `metadata.json`.
pub fn simulate(cfg: &ScenarioConfig) -> Result<Artifacts> {
    let scenario = cfg.scenario()?;
    let unit_scale = scenario.stats.rates().unit_scale()?;
    let metrics = run_replications(&scenario, cfg.replications, cfg.seed)?;
    let stability = detect_stability(&metrics);
    let mut out = Artifacts::default();
    out.add("metrics.csv", metrics.to_csv());
    out.add_json("metadata.json", &json!({
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "replications": cfg.replications,
        "horizon": cfg.horizon,
        "stride": scenario.stride,
        "unit_scale": unit_scale,
        "stability": stability_name(stability),
        "version": env!("CARGO_PKG_VERSION"),
    }));
    out.stability = Some(stability);
    Ok(out)
}

/// Samples per decade of the log-spaced LIL checkpoints.
const LIL_PER_DECADE: usize = 10;

/// `lil.csv` and `lil_envelope.csv`: normalized deviations of the learning
/// policy's empirical success probabilities from the inline oracle table.
pub fn lil(cfg: &ScenarioConfig) -> Result<Artifacts> {
    if !matches!(cfg.channel, ChannelSource::Inline { .. }) {
        bail!("lil needs an inline statistics source: the check compares against exact success probabilities");
    }
    let gamma = cfg.gamma()?;
    let mut scenario = cfg.scenario()?;
    scenario.policy = PolicySpec::Learning { gamma };
    let truth = scenario.stats.success_table()?;
    let mut sim = Simulation::new(&scenario, cfg.seed)?;
    let mut diag = LilDiagnostic::new(cfg.users, truth.rates().len());
    let mut slot = 0;
    for t in log_spaced_times(cfg.horizon, LIL_PER_DECADE) {
        while slot < t {
            sim.step();
            slot += 1;
        }
        let stats = sim.learning_stats().expect("learning policy keeps statistics");
        diag.observe(t, stats, &truth, sim.plan().expect("learning policy has a plan"));
    }
    let mut out = Artifacts::default();
    out.add("lil.csv", diag.to_csv());
    out.add("lil_envelope.csv", diag.envelope_csv());
    Ok(out)
}
