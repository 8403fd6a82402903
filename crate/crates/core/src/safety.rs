//! Data-dependent perception-error bounds and the safe set they certify.
//!
//! All distances are `l_inf` distances between measured positions `C x`,
//! because the rendered image, and hence the perception error, depends on
//! the state only through `C x`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perception::{apply_map, position_error, CircleSceneConfig, LinearPerceptionMap, PerceptionDataset};

/// Residuals `p(z_d) - C x_d` over the dataset, in dataset order.
pub fn training_residuals(ds: &PerceptionDataset, map: &LinearPerceptionMap) -> Result<Vec<DVector<f64>>> {
    (0..ds.len()).map(|i| Ok(apply_map(map, &ds.images[i])? - ds.position(i))).collect()
}

/// `R0 = max_d ||p(z_d) - C x_d||_inf`.
pub fn training_error(ds: &PerceptionDataset, map: &LinearPerceptionMap) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(training_residuals(ds, map)?.iter().map(|e| e.amax()).fold(0.0, f64::max))
}

/// Square grid of pitch at most `eps` on the `l_inf` ball of radius `r`:
/// `(steps, pitch)` with `2 steps + 1` points per axis. Every point of the
/// ball lies within `pitch / 2` of a grid point.
fn grid_shape(r: f64, eps: f64) -> Result<(usize, f64)> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("ball radius must be positive, got {r}")));
    }
    if !(eps > 0.0) || eps > r {
        return Err(Error::InvalidArgument(format!("cover resolution must lie in (0, r = {r}], got {eps}")));
    }
    let steps = (r / eps - 1e-12).ceil().max(1.0) as usize;
    Ok((steps, r / steps as f64))
}

fn grid_point(idx: usize, dim: usize, steps: usize, pitch: f64) -> DVector<f64> {
    let side = 2 * steps + 1;
    let mut rem = idx;
    DVector::from_fn(dim, |_, _| {
        let j = (rem % side) as f64 - steps as f64;
        rem /= side;
        j * pitch
    })
}

/// Offsets of the grid cover of the `l_inf` ball of radius `r` in `dim`
/// dimensions with pitch at most `eps`, centre excluded.
pub fn cover_offsets(dim: usize, r: f64, eps: f64) -> Result<Vec<DVector<f64>>> {
    let (steps, pitch) = grid_shape(r, eps)?;
    let total = (2 * steps + 1).pow(dim as u32);
    let center = (total - 1) / 2;
    Ok((0..total).filter(|&i| i != center).map(|i| grid_point(i, dim, steps, pitch)).collect())
}

/// Largest observed slope around one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSlope {
    pub slope: f64,
    /// `l_inf` distance from the centre at which `slope` was attained.
    pub argmax_distance: f64,
    /// Largest `||f(a) - f(b)||_inf / pitch` over axis-neighbouring grid
    /// points, a lower estimate of the local Lipschitz constant.
    pub local_quotient: f64,
}

/// `max ||f(c + d) - f(c)||_inf / ||d||_inf` over the grid cover of the
/// radius-`r` ball around `c`.
pub fn max_slope_on_grid<F>(f: F, center: &DVector<f64>, r: f64, eps: f64) -> Result<PointSlope>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let dim = center.len();
    let (steps, pitch) = grid_shape(r, eps)?;
    let side = 2 * steps + 1;
    let total = side.pow(dim as u32);
    let mid = (total - 1) / 2;
    let values = (0..total)
        .map(|i| f(&(center + grid_point(i, dim, steps, pitch))))
        .collect::<Result<Vec<_>>>()?;
    let mut best = PointSlope { slope: 0.0, argmax_distance: 0.0, local_quotient: 0.0 };
    for (i, v) in values.iter().enumerate() {
        if i != mid {
            let dist = grid_point(i, dim, steps, pitch).amax();
            let s = (v - &values[mid]).amax() / dist;
            if s > best.slope {
                best.slope = s;
                best.argmax_distance = dist;
            }
        }
        let mut stride = 1;
        let mut rem = i;
        for _ in 0..dim {
            if rem % side + 1 < side {
                let q = (&values[i + stride] - v).amax() / pitch;
                best.local_quotient = best.local_quotient.max(q);
            }
            rem /= side;
            stride *= side;
        }
    }
    Ok(best)
}

/// `Ŝ_{x_d}` for the perception error of `map` in the circle scene, with the
/// ball taken around the position `C x_d`.
pub fn estimate_slope(
    map: &LinearPerceptionMap,
    scene: &CircleSceneConfig,
    c: &DMatrix<f64>,
    x_d: &DVector<f64>,
    r: f64,
    eps: f64,
) -> Result<PointSlope> {
    if x_d.len() != c.ncols() {
        return Err(Error::Dimension("state does not match C".into()));
    }
    max_slope_on_grid(|p| position_error(map, scene, p), &(c * x_d), r, eps)
}

/// Per-point slope estimates and the assumptions used to inflate them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    /// `(training index, Ŝ_{x_d})` for every probed training point.
    pub per_point: Vec<(usize, PointSlope)>,
    pub radius: f64,
    pub epsilon: f64,
    pub tau: f64,
    pub lipschitz: f64,
    pub corrected: f64,
}

impl SlopeEstimate {
    /// `Ŝ = max_{x_d} Ŝ_{x_d}`.
    pub fn max_observed(&self) -> f64 {
        self.per_point.iter().map(|(_, s)| s.slope).fold(0.0, f64::max)
    }

    /// Smallest distance at which any per-point maximum was attained.
    pub fn min_argmax_distance(&self) -> f64 {
        self.per_point.iter().map(|(_, s)| s.argmax_distance).fold(f64::INFINITY, f64::min)
    }
}

/// `S = Ŝ (1 + eps/tau) + L eps / tau`.
pub fn corrected_slope(max_observed: f64, eps: f64, tau: f64, lipschitz: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    if !(eps >= 0.0 && lipschitz >= 0.0 && max_observed >= 0.0) {
        return Err(Error::InvalidArgument("eps, L and the observed slope must be nonnegative".into()));
    }
    Ok(max_observed * (1.0 + eps / tau) + lipschitz * eps / tau)
}

/// Slope estimates at the given training indices (all of them when `indices`
/// is `None`), computed in parallel.
#[allow(clippy::too_many_arguments)]
pub fn estimate_slopes(
    map: &LinearPerceptionMap,
    scene: &CircleSceneConfig,
    ds: &PerceptionDataset,
    indices: Option<&[usize]>,
    r: f64,
    eps: f64,
    tau: f64,
    lipschitz: f64,
) -> Result<SlopeEstimate> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let all: Vec<usize> = match indices {
        Some(ix) => ix.to_vec(),
        None => (0..ds.len()).collect(),
    };
    if let Some(&bad) = all.iter().find(|&&i| i >= ds.len()) {
        return Err(Error::InvalidArgument(format!("training index {bad} out of range")));
    }
    let per_point = all
        .par_iter()
        .map(|&i| Ok((i, max_slope_on_grid(|p| position_error(map, scene, p), &ds.position(i), r, eps)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut est = SlopeEstimate { per_point, radius: r, epsilon: eps, tau, lipschitz, corrected: 0.0 };
    est.corrected = corrected_slope(est.max_observed(), eps, tau, lipschitz)?;
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafeSetParams {
    /// Validity radius `r` of the slope bound around each training point.
    pub r: f64,
    /// Slope bound `S`.
    pub slope: f64,
    /// Training error bound `R0`.
    pub r0: f64,
    /// Error budget `gamma`.
    pub gamma: f64,
    pub epsilon: f64,
    pub tau: f64,
    pub lipschitz: f64,
}

impl SafeSetParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.slope, self.r0, self.gamma, self.lipschitz, self.epsilon];
        if nonneg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("S, R0, gamma, eps and L must be finite and nonnegative".into()));
        }
        if !(self.tau > 0.0 && self.tau <= self.r) {
            return Err(Error::InvalidArgument(format!("need 0 < tau <= r, got tau = {}, r = {}", self.tau, self.r)));
        }
        if self.epsilon > self.r {
            return Err(Error::InvalidArgument("eps must not exceed r".into()));
        }
        Ok(())
    }
}

/// Training positions and residuals, enough to test membership in
/// `X_gamma = { x : exists d, ||Cx - Cx_d|| <= r, |e_d| + S ||Cx - Cx_d|| <= gamma }`.
#[derive(Debug, Clone)]
pub struct SafeSet {
    pub params: SafeSetParams,
    positions: Vec<DVector<f64>>,
    residual_norms: Vec<f64>,
}

impl SafeSet {
    pub fn new(params: SafeSetParams, ds: &PerceptionDataset, map: &LinearPerceptionMap) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            positions: ds.positions(),
            residual_norms: training_residuals(ds, map)?.iter().map(|e| e.amax()).collect(),
        })
    }

    /// Lowest training index witnessing membership of the position `pos`.
    pub fn witness(&self, pos: &DVector<f64>) -> Option<usize> {
        let p = &self.params;
        self.positions.iter().zip(&self.residual_norms).position(|(xd, res)| {
            let dist = (pos - xd).amax();
            dist <= p.r && res + p.slope * dist <= p.gamma
        })
    }

    /// `(distance, index)` of the nearest training position, lowest index
    /// on ties.
    pub fn nearest(&self, pos: &DVector<f64>) -> (f64, usize) {
        nearest_position(&self.positions, pos)
    }

    pub fn residual_norm(&self, i: usize) -> f64 {
        self.residual_norms[i]
    }
}

pub fn nearest_position(positions: &[DVector<f64>], pos: &DVector<f64>) -> (f64, usize) {
    let mut best = (f64::INFINITY, usize::MAX);
    for (i, xd) in positions.iter().enumerate() {
        let d = (pos - xd).amax();
        if d < best.0 {
            best = (d, i);
        }
    }
    best
}

/// Membership of the state `x`; returns the witnessing training index.
pub fn safe_set_contains(
    params: &SafeSetParams,
    ds: &PerceptionDataset,
    map: &LinearPerceptionMap,
    x: &DVector<f64>,
) -> Result<Option<usize>> {
    let c = &ds.meta.c;
    if x.len() != c.ncols() {
        return Err(Error::Dimension("state does not match C".into()));
    }
    Ok(SafeSet::new(*params, ds, map)?.witness(&(c * x)))
}
