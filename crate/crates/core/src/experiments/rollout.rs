//! Perturbed tracking rollouts with the learned sensor in the loop.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::pipeline::{error_plant, perturbed_reference, ControllerArtifact};
use crate::error::{Error, Result};
use crate::perception::{position_error, LinearPerceptionMap};
use crate::sls::{SynthesisMode, SynthesisStatus};

/// Relative slack allowed in the recorded-signal bound checks.
const CHECK_TOLERANCE: f64 = 1e-9;

/// Nearest-neighbour queries against the training positions.
#[derive(Debug, Clone)]
pub struct TrainingPositions {
    xy: Vec<[f64; 2]>,
}

impl TrainingPositions {
    pub fn new(positions: &[DVector<f64>]) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if positions.iter().any(|p| p.len() != 2) {
            return Err(Error::Dimension("training positions must be planar".into()));
        }
        Ok(Self { xy: positions.iter().map(|p| [p[0], p[1]]).collect() })
    }

    /// `(l_inf distance, index)` of the nearest training position; lowest
    /// index on ties.
    pub fn nearest(&self, p: &DVector<f64>) -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, q) in self.xy.iter().enumerate() {
            let d = (p[0] - q[0]).abs().max((p[1] - q[1]).abs());
            if d < best.0 {
                best = (d, i);
            }
        }
        best
    }
}

/// Seed of rollout `i`, decorrelated from the training seed.
pub fn rollout_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (i as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutSeries {
    pub id: usize,
    /// Starting phase along the orbit, in turns.
    pub phase: f64,
    /// `||C xi_k - w_k||_inf` against the perturbed reference.
    pub tracking_err: Vec<f64>,
    pub dist_train: Vec<f64>,
    pub perception_err: Vec<f64>,
    /// Distance to the training data of the same rollout with an exact sensor.
    pub nominal_dist: Vec<f64>,
    pub diverged_at: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuartileRow {
    pub k: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Bounds the rollouts are checked against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutBounds {
    /// Safe-set radius `r`.
    pub radius: f64,
    /// Perception-error budget, for controllers that certify one.
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub controller: String,
    pub rollouts: usize,
    pub horizon: usize,
    pub xe_norm: f64,
    pub radius: f64,
    pub gamma: Option<f64>,
    pub max_tracking_error: f64,
    pub max_perception_error: f64,
    pub max_dist_train: f64,
    /// Rollouts that leave the radius-`r` neighbourhood of the training data.
    pub rollouts_exiting_radius: usize,
    /// Steps with perception error above `gamma` (zero when no budget).
    pub steps_over_gamma: usize,
    pub diverged: usize,
    /// Steps where `dist <= nominal dist + ||C Phi_xe|| max_j |e_j|` fails.
    pub distance_bound_violations: usize,
}

impl RolloutSummary {
    /// No step left the safe set: distance within `r` and, when a budget
    /// applies, perception error within `gamma`.
    pub fn zero_safe_set_violations(&self) -> bool {
        self.rollouts_exiting_radius == 0 && self.steps_over_gamma == 0 && self.diverged == 0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutReport {
    pub summary: RolloutSummary,
    pub series: Vec<RolloutSeries>,
    pub aggregate: Vec<QuartileRow>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Per-step quartiles of `values[rollout][k]` over rollouts that are still
/// finite at `k`.
pub fn quartiles(values: &[&[f64]], horizon: usize) -> Vec<QuartileRow> {
    (0..horizon)
        .filter_map(|k| {
            let mut col: Vec<f64> = values.iter().filter_map(|s| s.get(k).copied()).filter(|v| v.is_finite()).collect();
            if col.is_empty() {
                return None;
            }
            col.sort_by(f64::total_cmp);
            Some(QuartileRow { k, q1: quantile(&col, 0.25), median: quantile(&col, 0.5), q3: quantile(&col, 0.75) })
        })
        .collect()
}

fn single_rollout(
    cfg: &ExperimentConfig,
    map: &LinearPerceptionMap,
    training: &TrainingPositions,
    artifact: &ControllerArtifact,
    id: usize,
) -> Result<RolloutSeries> {
    let sys = error_plant(cfg)?;
    let law = artifact
        .law
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no controller to simulate", artifact.mode.label())))?;
    let horizon = cfg.rollouts.horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(rollout_seed(cfg.seed, id));
    let phase: f64 = rng.gen();
    let reference = perturbed_reference(cfg, horizon + 1, phase, &mut rng);

    let mut ctrl = law.instantiate()?;
    let mut nominal_ctrl = law.instantiate()?;
    let mut x = DVector::zeros(sys.n());
    let mut xn = DVector::zeros(sys.n());
    let mut s = RolloutSeries {
        id,
        phase,
        tracking_err: Vec::with_capacity(horizon),
        dist_train: Vec::with_capacity(horizon),
        perception_err: Vec::with_capacity(horizon),
        nominal_dist: Vec::with_capacity(horizon),
        diverged_at: None,
    };
    for k in 0..horizon {
        let track = &sys.c * &x;
        let pos = &track + &reference[k];
        let e = position_error(map, &cfg.scene, &pos)?;
        let y = &track + &e;
        let u = ctrl.control();
        ctrl.observe(&y);

        let track_n = &sys.c * &xn;
        let un = nominal_ctrl.control();
        nominal_ctrl.observe(&track_n);

        if !(pos.iter().chain(e.iter()).chain(u.iter()).all(|v| v.is_finite())) {
            s.diverged_at = Some(k);
            break;
        }
        s.tracking_err.push(track.amax());
        s.dist_train.push(training.nearest(&pos).0);
        s.perception_err.push(e.amax());
        s.nominal_dist.push(training.nearest(&(&track_n + &reference[k])).0);

        let w = &reference[k + 1] - &reference[k];
        x = &sys.a * &x + &sys.b * &u + &sys.h * &w;
        xn = &sys.a * &xn + &sys.b * &un + &sys.h * &w;
    }
    Ok(s)
}

/// Runs `cfg.rollouts.count` perturbed rollouts of one controller. Rollouts
/// run concurrently and are reduced in index order.
pub fn run_tracking_experiment(
    cfg: &ExperimentConfig,
    map: &LinearPerceptionMap,
    training: &TrainingPositions,
    artifact: &ControllerArtifact,
    bounds: RolloutBounds,
) -> Result<RolloutReport> {
    let xe = artifact
        .xe_norm
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no controller to simulate", artifact.mode.label())))?;
    let series = (0..cfg.rollouts.count)
        .into_par_iter()
        .map(|i| single_rollout(cfg, map, training, artifact, i))
        .collect::<Result<Vec<_>>>()?;

    let fold_max = |f: &dyn Fn(&RolloutSeries) -> &Vec<f64>| {
        series.iter().flat_map(|s| f(s).iter().copied()).fold(0.0, f64::max)
    };
    let mut bound_violations = 0;
    for s in &series {
        let mut max_e: f64 = 0.0;
        for k in 0..s.dist_train.len() {
            let bound = s.nominal_dist[k] + xe * max_e;
            if s.dist_train[k] > bound + CHECK_TOLERANCE * (1.0 + bound) {
                bound_violations += 1;
            }
            max_e = max_e.max(s.perception_err[k]);
        }
    }
    let summary = RolloutSummary {
        controller: artifact.mode.label().into(),
        rollouts: series.len(),
        horizon: cfg.rollouts.horizon,
        xe_norm: xe,
        radius: bounds.radius,
        gamma: bounds.gamma,
        max_tracking_error: fold_max(&|s| &s.tracking_err),
        max_perception_error: fold_max(&|s| &s.perception_err),
        max_dist_train: fold_max(&|s| &s.dist_train),
        rollouts_exiting_radius: series.iter().filter(|s| s.dist_train.iter().any(|&d| d > bounds.radius)).count(),
        steps_over_gamma: bounds
            .gamma
            .map(|g| series.iter().flat_map(|s| &s.perception_err).filter(|&&e| e > g).count())
            .unwrap_or(0),
        diverged: series.iter().filter(|s| s.diverged_at.is_some()).count(),
        distance_bound_violations: bound_violations,
    };
    let cols: Vec<&[f64]> = series.iter().map(|s| s.tracking_err.as_slice()).collect();
    let aggregate = quartiles(&cols, cfg.rollouts.horizon);
    Ok(RolloutReport { summary, series, aggregate })
}

/// Budget certified by a synthesized controller, if any: the achieved
/// `gamma` of an optimal robust program.
pub fn certified_gamma(artifact: &ControllerArtifact) -> Option<f64> {
    if !matches!(artifact.mode, SynthesisMode::RobustL1 | SynthesisMode::RobustH2) {
        return None;
    }
    let res = artifact.synthesis.as_ref()?;
    (res.status == SynthesisStatus::Optimal).then_some(res.gamma).flatten()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_are_ordered_and_skip_missing_steps() {
        let a = [1.0, 2.0, 3.0];
        let b = [3.0, 2.0];
        let c = [2.0, f64::NAN, 9.0];
        let rows = quartiles(&[&a, &b, &c], 4);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].median, 2.0);
        assert_eq!((rows[0].q1, rows[0].q3), (1.5, 2.5));
        assert_eq!(rows[1].median, 2.0);
        assert_eq!(rows[2].median, 6.0);
        assert!(rows.iter().all(|r| r.q1 <= r.median && r.median <= r.q3));
    }

    #[test]
    fn nearest_uses_lowest_index_on_ties() {
        let t = TrainingPositions::new(&[
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![-1.0, 0.0]),
        ])
        .unwrap();
        assert_eq!(t.nearest(&DVector::from_vec(vec![0.0, 0.0])), (1.0, 0));
        assert!(TrainingPositions::new(&[]).is_err());
    }

    #[test]
    fn seeds_differ_per_rollout() {
        assert_ne!(rollout_seed(7, 0), rollout_seed(7, 1));
        assert_ne!(rollout_seed(7, 0), rollout_seed(8, 0));
    }
}
