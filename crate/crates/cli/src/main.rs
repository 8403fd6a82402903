//! `percept`: runs the perception-based control pipeline one stage at a time.
//!
//! All stages of a run share an output directory whose `manifest.json`
//! records the effective configuration, the stages that ran and the SHA-256
//! of every file they wrote. Exit status is 0 on success, 2 when synthesis
//! is infeasible and 1 on any other error.

mod manifest;
mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use percept_core::experiments::ExperimentConfig;
use percept_core::sls::SynthesisMode;

use manifest::RunManifest;
use stages::{Outcome, Run};

#[derive(Parser, Debug)]
#[command(version, about = "Perception-based robust control pipeline")]
struct Cli {
    #[command(subcommand)]
    stage: Stage,

    /// JSON run configuration; omitted sections and fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory shared by the stages of one run.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Applies the configuration's `fast` profile.
    #[arg(long, global = true)]
    fast: bool,

    /// Restricts synthesize, simulate and report to one controller.
    #[arg(long, global = true, value_enum)]
    controller: Option<ControllerArg>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Stage {
    /// Render the training images along the closed-loop training trajectory.
    GenerateData,
    /// Fit the linear perception map.
    TrainPerception,
    /// Estimate the training error, slope bound and reference distances.
    EstimateSafety,
    /// Synthesize the configured controllers.
    Synthesize,
    /// Run perturbed tracking rollouts with the learned sensor.
    Simulate,
    /// Sample perception error against distance to the training data.
    Profile,
    /// Spectral radius of the adversarially perturbed loop against the cap alpha.
    Necessity,
    /// Plots and a JSON summary of the other stages.
    Report,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ControllerArg {
    Lqg,
    NominalL1,
    RobustL1,
    RobustH2,
}

impl From<ControllerArg> for SynthesisMode {
    fn from(c: ControllerArg) -> Self {
        match c {
            ControllerArg::Lqg => SynthesisMode::Lqg,
            ControllerArg::NominalL1 => SynthesisMode::NominalL1,
            ControllerArg::RobustL1 => SynthesisMode::RobustL1,
            ControllerArg::RobustH2 => SynthesisMode::RobustH2,
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let Some(path) = path else { return Ok(ExperimentConfig::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        anyhow::anyhow!("config {}: field `{field}`: {}", path.display(), e.into_inner())
    })
}

fn run(cli: &Cli) -> Result<Outcome> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.fast {
        cfg = cfg.fast_profile();
    }
    cfg.validate().context("invalid config")?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let manifest = RunManifest::open(&cli.out, &cfg, cli.fast)?;
    let controllers = match cli.controller {
        Some(c) => vec![c.into()],
        None => cfg.controllers.clone(),
    };
    let mut run = Run { out: &cli.out, cfg: &cfg, manifest, controllers };
    match cli.stage {
        Stage::GenerateData => run.generate_data(),
        Stage::TrainPerception => run.train_perception(),
        Stage::EstimateSafety => run.estimate_safety(),
        Stage::Synthesize => run.synthesize(),
        Stage::Simulate => run.simulate(),
        Stage::Profile => run.profile(),
        Stage::Necessity => run.necessity(),
        Stage::Report => run.report(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Infeasible(messages)) => {
            for m in messages {
                eprintln!("infeasible: {m}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
