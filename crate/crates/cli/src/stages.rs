//! One function per pipeline stage. Each stage declares the files it reads,
//! verifies them against the manifest and records what it writes.

use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use percept_core::experiments::necessity::{necessity_demo, NecessityReport};
use percept_core::experiments::pipeline::{build_controller, build_dataset, calibrate_safety, train_map, ControllerArtifact, SafetyCalibration};
use percept_core::experiments::profile::{perception_error_profile, probe_positions, ProfileRow};
use percept_core::experiments::report::{
    profile_plot_svg, quartile_plot_svg, write_aggregate_csv, write_necessity_csv, write_profile_csv, write_rollout_csv,
};
use percept_core::experiments::rollout::{certified_gamma, quartiles, run_tracking_experiment, RolloutBounds, RolloutReport, TrainingPositions};
use percept_core::experiments::ExperimentConfig;
use percept_core::perception::{normal_equation_residual, LinearPerceptionMap, PerceptionDataset};
use percept_core::safety::training_error;
use percept_core::sls::{SynthesisMode, SynthesisStatus};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::manifest::{list_dir, RunManifest};

pub const MAP_FILE: &str = "perception/map.json";
pub const SAFETY_FILE: &str = "safety/calibration.json";
pub const PROFILE_FILE: &str = "profile/profile.csv";
pub const NECESSITY_CSV: &str = "necessity/necessity.csv";
pub const NECESSITY_JSON: &str = "necessity/report.json";

pub fn controller_file(mode: SynthesisMode) -> String {
    format!("controllers/{}.json", mode.label())
}

pub fn rollout_file(mode: SynthesisMode) -> String {
    format!("rollouts/{}.json", mode.label())
}

pub enum Outcome {
    Done,
    /// Synthesis found no controller; carries one message per failed program.
    Infeasible(Vec<String>),
}

pub struct Run<'a> {
    pub out: &'a Path,
    pub cfg: &'a ExperimentConfig,
    pub manifest: RunManifest,
    /// Controllers this invocation works on.
    pub controllers: Vec<SynthesisMode>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(out: &Path, rel: &str, value: &T) -> Result<String> {
    let path = out.join(rel);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(&path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(rel.to_string())
}

fn ensure_dir(out: &Path, dir: &str) -> Result<()> {
    fs::create_dir_all(out.join(dir)).with_context(|| format!("creating {}", out.join(dir).display()))
}

impl Run<'_> {
    fn finish(&mut self, stage: &str, inputs: Vec<String>, outputs: Vec<String>, started: Instant) -> Result<()> {
        self.manifest.record(self.out, stage, inputs, outputs, started.elapsed().as_secs_f64())?;
        self.manifest.save(self.out)
    }

    fn load_dataset(&self) -> Result<(PerceptionDataset, Vec<String>)> {
        let files = self.manifest.require_prefix(self.out, "dataset/", "meta.json")?;
        let ds = PerceptionDataset::load(&self.out.join("dataset"))
            .with_context(|| format!("loading {}", self.out.join("dataset").display()))?;
        Ok((ds, files))
    }

    fn load<T: DeserializeOwned>(&self, rel: &str) -> Result<T> {
        read_json(&self.manifest.require(self.out, rel)?)
    }

    pub fn generate_data(&mut self) -> Result<Outcome> {
        let t = Instant::now();
        let ds = build_dataset(self.cfg)?;
        let dir = self.out.join("dataset");
        if dir.exists() {
            fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
        }
        ds.save(&dir)?;
        println!("generated {} images of {}x{} pixels", ds.len(), self.cfg.scene.width, self.cfg.scene.height);
        let outputs = list_dir(self.out, "dataset")?;
        self.finish("generate-data", vec![], outputs, t)?;
        Ok(Outcome::Done)
    }

    pub fn train_perception(&mut self) -> Result<Outcome> {
        let t = Instant::now();
        let (ds, inputs) = self.load_dataset()?;
        let map = train_map(self.cfg, &ds)?;
        println!(
            "trained map: ridge {:.3e}, training error R0 {:.6e}, normal-equation residual {:.3e}",
            map.ridge,
            training_error(&ds, &map)?,
            normal_equation_residual(&ds, &map)
        );
        let out = write_json(self.out, MAP_FILE, &map)?;
        self.finish("train-perception", inputs, vec![out], t)?;
        Ok(Outcome::Done)
    }

    pub fn estimate_safety(&mut self) -> Result<Outcome> {
        let t = Instant::now();
        let (ds, mut inputs) = self.load_dataset()?;
        let map: LinearPerceptionMap = self.load(MAP_FILE)?;
        inputs.push(MAP_FILE.into());
        let cal = calibrate_safety(self.cfg, &ds, &map)?;
        println!(
            "safe set: r {}, R0 {:.4e}, slope observed {:.4e}, corrected S {:.4e}, Delta_ref {:.4e}, r_ref {:.4e}",
            cal.radius,
            cal.r0,
            cal.slope.max_observed(),
            cal.corrected_slope(),
            cal.delta_ref,
            cal.r_ref
        );
        let out = write_json(self.out, SAFETY_FILE, &cal)?;
        self.finish("estimate-safety", inputs, vec![out], t)?;
        Ok(Outcome::Done)
    }

    pub fn synthesize(&mut self) -> Result<Outcome> {
        let t = Instant::now();
        let cal: SafetyCalibration = self.load(SAFETY_FILE)?;
        let mut outputs = Vec::new();
        let mut failures = Vec::new();
        for &mode in &self.controllers {
            let artifact = build_controller(self.cfg, &cal, mode)?;
            match &artifact.synthesis {
                Some(res) if res.status == SynthesisStatus::Infeasible || artifact.law.is_none() => {
                    failures.push(format!("{}: {}", mode.label(), res.message));
                }
                Some(res) => {
                    if res.status == SynthesisStatus::ToleranceReached {
                        eprintln!("warning: {}: {}", mode.label(), res.message);
                    }
                    println!(
                        "{}: ||C Phi_xe|| {:.6}, gamma {}",
                        mode.label(),
                        artifact.xe_norm.unwrap_or(f64::NAN),
                        res.gamma.map_or("-".into(), |g| format!("{g:.6e}"))
                    );
                }
                None => println!("{}: ||C Phi_xe|| {:.6}", mode.label(), artifact.xe_norm.unwrap_or(f64::NAN)),
            }
            outputs.push(write_json(self.out, &controller_file(mode), &artifact)?);
            if let Some(res) = &artifact.synthesis {
                let rel = controller_file(mode).replace(".json", ".txt");
                fs::write(self.out.join(&rel), res.summary()).with_context(|| format!("writing {rel}"))?;
                outputs.push(rel);
            }
        }
        self.finish("synthesize", vec![SAFETY_FILE.into()], outputs, t)?;
        Ok(if failures.is_empty() { Outcome::Done } else { Outcome::Infeasible(failures) })
    }

    pub fn simulate(&mut self) -> Result<Outcome> {
        let t = Instant::now();
        let (ds, mut inputs) = self.load_dataset()?;
        let map: LinearPerceptionMap = self.load(MAP_FILE)?;
        let cal: SafetyCalibration = self.load(SAFETY_FILE)?;
        inputs.extend([MAP_FILE.to_string(), SAFETY_FILE.to_string()]);
        let training = TrainingPositions::new(&ds.positions())?;
        ensure_dir(self.out, "rollouts")?;
        let mut outputs = Vec::new();
        for &mode in &self.controllers {
            let file = controller_file(mode);
            let artifact: ControllerArtifact = self.load(&file)?;
            inputs.push(file.clone());
            if artifact.law.is_none() {
                bail!("{file} holds no controller (synthesis was infeasible)");
            }
            let bounds = RolloutBounds { radius: cal.radius, gamma: certified_gamma(&artifact) };
            let rep = run_tracking_experiment(self.cfg, &map, &training, &artifact, bounds)?;
            let s = &rep.summary;
            println!(
                "{}: {} rollouts, max dist {:.4}, max perception error {:.4e}, exits {}, over gamma {}, diverged {}",
                s.controller, s.rollouts, s.max_dist_train, s.max_perception_error, s.rollouts_exiting_radius, s.steps_over_gamma, s.diverged
            );
            let label = mode.label();
            let series = format!("rollouts/{label}.csv");
            let aggregate = format!("rollouts/{label}_aggregate.csv");
            write_rollout_csv(&self.out.join(&series), std::slice::from_ref(&rep))?;
            write_aggregate_csv(&self.out.join(&aggregate), std::slice::from_ref(&rep))?;
            outputs.extend([write_json(self.out, &rollout_file(mode), &rep)?, series, aggregate]);
        }
        self.finish("simulate", inputs, outputs, t)?;
        Ok(Outcome::Done)
    }

    pub fn profile(&mut self) -> Result<Outcome> {
        let t = Instant::now();
        let (ds, mut inputs) = self.load_dataset()?;
        let map: LinearPerceptionMap = self.load(MAP_FILE)?;
        inputs.push(MAP_FILE.into());
        let positions = ds.positions();
        let training = TrainingPositions::new(&positions)?;
        let probes = probe_positions(&positions, self.cfg.profile.probes, self.cfg.profile.max_offset, self.cfg.seed);
        let rows = perception_error_profile(&map, &self.cfg.scene, &training, &probes)?;
        ensure_dir(self.out, "profile")?;
        write_profile_csv(&self.out.join(PROFILE_FILE), &rows)?;
        println!("profiled {} probes", rows.len());
        self.finish("profile", inputs, vec![PROFILE_FILE.into()], t)?;
        Ok(Outcome::Done)
    }

    pub fn necessity(&mut self) -> Result<Outcome> {
        let t = Instant::now();
        let rep = necessity_demo(&self.cfg.necessity)?;
        println!("slope S {:.6}, 1/S {:.6}", rep.slope, 1.0 / rep.slope);
        for r in &rep.rows {
            println!(
                "  alpha {:.4} ({:.2}/S): spectral radius {}, {}",
                r.alpha,
                r.alpha_factor,
                r.spectral_radius.map_or("-".into(), |v| format!("{v:.9}")),
                r.verdict.label()
            );
        }
        ensure_dir(self.out, "necessity")?;
        write_necessity_csv(&self.out.join(NECESSITY_CSV), &rep)?;
        let json = write_json(self.out, NECESSITY_JSON, &rep)?;
        self.finish("necessity", vec![], vec![NECESSITY_CSV.into(), json], t)?;
        Ok(Outcome::Done)
    }

    pub fn report(&mut self) -> Result<Outcome> {
        let t = Instant::now();
        let mut inputs = Vec::new();
        let mut reports = Vec::new();
        for &mode in &self.controllers {
            let file = rollout_file(mode);
            reports.push(self.load::<RolloutReport>(&file)?);
            inputs.push(file);
        }
        let cal: SafetyCalibration = self.load(SAFETY_FILE)?;
        let profile_path = self.manifest.require(self.out, PROFILE_FILE)?;
        let necessity: NecessityReport = self.load(NECESSITY_JSON)?;
        inputs.extend([SAFETY_FILE.to_string(), PROFILE_FILE.to_string(), NECESSITY_JSON.to_string()]);
        let profile: Vec<ProfileRow> = csv::Reader::from_path(&profile_path)?.deserialize().collect::<Result<_, _>>()?;

        ensure_dir(self.out, "report")?;
        let mut outputs = Vec::new();
        let horizon = self.cfg.rollouts.horizon;
        let metric = |f: fn(&percept_core::experiments::rollout::RolloutSeries) -> &Vec<f64>| -> Vec<Vec<_>> {
            reports
                .iter()
                .map(|r| quartiles(&r.series.iter().map(|s| f(s).as_slice()).collect::<Vec<_>>(), horizon))
                .collect()
        };
        let gamma = reports.iter().filter_map(|r| r.summary.gamma).fold(None, |m: Option<f64>, g| Some(m.map_or(g, |v| v.max(g))));
        let plots = [
            ("report/tracking_error.svg", "Tracking error", "||C x_k||_inf", metric(|s| &s.tracking_err), None),
            ("report/distance_to_training.svg", "Distance to training data", "l_inf distance", metric(|s| &s.dist_train), Some(("r", cal.radius))),
            ("report/perception_error.svg", "Perception error", "||e_k||_inf", metric(|s| &s.perception_err), gamma.map(|g| ("gamma", g))),
        ];
        for (rel, title, ylabel, rows, reference) in &plots {
            let series: Vec<(&str, &[_])> =
                reports.iter().zip(rows).map(|(r, q)| (r.summary.controller.as_str(), q.as_slice())).collect();
            fs::write(self.out.join(rel), quartile_plot_svg(title, ylabel, &series, *reference))?;
            outputs.push(rel.to_string());
        }
        fs::write(self.out.join("report/profile.svg"), profile_plot_svg("Perception error against distance to training data", &profile))?;
        outputs.push("report/profile.svg".into());

        let summary = serde_json::json!({
            "safety": {
                "radius": cal.radius,
                "r0": cal.r0,
                "slope": cal.corrected_slope(),
                "delta_ref": cal.delta_ref,
                "r_ref": cal.r_ref,
            },
            "controllers": reports.iter().map(|r| &r.summary).collect::<Vec<_>>(),
            "necessity": {
                "slope": necessity.slope,
                "rows": necessity.rows,
            },
        });
        outputs.push(write_json(self.out, "report/summary.json", &summary)?);
        for r in &reports {
            let s = &r.summary;
            println!(
                "{:<11} exits {:>3}/{:<3} max dist {:>9.4} (r = {}), over gamma {}",
                s.controller, s.rollouts_exiting_radius, s.rollouts, s.max_dist_train, s.radius, s.steps_over_gamma
            );
        }
        self.finish("report", inputs, outputs, t)?;
        Ok(Outcome::Done)
    }
}
