//! Perception error against distance to the training data.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rollout::TrainingPositions;
use crate::error::Result;
use crate::perception::{position_error, CircleSceneConfig, LinearPerceptionMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub dist_to_nearest_train: f64,
    pub error_inf: f64,
    pub train_index: usize,
}

/// For each probe position: distance to the nearest training position, the
/// perception error there, and the nearest training index.
pub fn perception_error_profile(
    map: &LinearPerceptionMap,
    scene: &CircleSceneConfig,
    training: &TrainingPositions,
    probes: &[DVector<f64>],
) -> Result<Vec<ProfileRow>> {
    probes
        .par_iter()
        .map(|p| {
            let (dist, idx) = training.nearest(p);
            Ok(ProfileRow { dist_to_nearest_train: dist, error_inf: position_error(map, scene, p)?.amax(), train_index: idx })
        })
        .collect()
}

/// `count` probes, each a uniformly drawn training position shifted by a
/// uniform offset in the `l_inf` ball of radius `max_offset`.
pub fn probe_positions(positions: &[DVector<f64>], count: usize, max_offset: f64, seed: u64) -> Vec<DVector<f64>> {
    if positions.is_empty() {
        return vec![];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let base = &positions[rng.gen_range(0..positions.len())];
            base + DVector::from_fn(base.len(), |_, _| rng.gen_range(-max_offset..=max_offset))
        })
        .collect()
}
