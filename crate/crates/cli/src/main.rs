use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use csi_sched::sim::Stability;
use csi_sched_cli::commands::{self, stability_name};
use csi_sched_cli::{Overrides, ScenarioConfig};

/// Scheduling experiments under imperfect channel-state information.
///
/// Flags override the matching top-level keys of the config file.
/// Set CSI_SCHED_THREADS to cap the threads used for replications.
#[derive(Parser)]
#[command(name = "csi-sched", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stability-region boundaries and corners.
    Region(Args),
    /// Exploration plan and bottleneck report.
    Plan(Args),
    /// Replicated queueing simulation.
    Simulate {
        #[command(flatten)]
        args: Args,
        /// Exit with failure unless the stability verdict matches.
        #[arg(long)]
        expect: Option<Expect>,
    },
    /// Iterated-logarithm diagnostics of the learned statistics.
    Lil(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Expect {
    Stable,
    Unstable,
}

impl Args {
    fn load(&self) -> anyhow::Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            out: self.out.clone(),
            seed: self.seed,
            reps: self.reps,
            horizon: self.horizon,
            gamma: self.gamma,
        });
        Ok(cfg)
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let (args, expect) = match &cli.command {
        Command::Region(a) | Command::Plan(a) | Command::Lil(a) => (a, None),
        Command::Simulate { args, expect } => (args, *expect),
    };
    let cfg = args.load()?;
    let artifacts = match cli.command {
        Command::Region(_) => commands::region(&cfg)?,
        Command::Plan(_) => commands::plan(&cfg)?,
        Command::Simulate { .. } => commands::simulate(&cfg)?,
        Command::Lil(_) => commands::lil(&cfg)?,
    };
    for w in &artifacts.warnings {
        eprintln!("warning: {w}");
    }
    artifacts.write(&cfg.out_dir)?;
    if let (Some(expect), Some(got)) = (expect, artifacts.stability) {
        let wanted = match expect {
            Expect::Stable => Stability::Stable,
            Expect::Unstable => Stability::Unstable,
        };
        if got != wanted {
            eprintln!("expected {}, detected {}", stability_name(wanted), stability_name(got));
            return Ok(ExitCode::FAILURE);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
