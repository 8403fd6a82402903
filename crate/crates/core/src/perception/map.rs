//! Linear regression from pixels to position.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dataset::PerceptionDataset;
use super::scene::{render_circle, CircleSceneConfig, Image};
use crate::error::{Error, Result};

/// Default ridge weight per pixel; the fitted weight is this times the
/// pixel count.
pub const DEFAULT_RIDGE_PER_PIXEL: f64 = 1e-6;

/// `y = W vec(z) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPerceptionMap {
    #[serde(with = "crate::serde_mat")]
    pub weights: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::vector")]
    pub bias: DVector<f64>,
    pub ridge: f64,
    pub width: usize,
    pub height: usize,
    /// Set when `ridge = 0` met rank-deficient features and the
    /// minimum-norm solution was returned.
    pub min_norm: bool,
}

impl LinearPerceptionMap {
    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }
}

fn pixel_matrix(images: &[Image]) -> DMatrix<f64> {
    let p = images[0].pixels.len();
    DMatrix::from_fn(images.len(), p, |i, j| images[i].pixels[j])
}

/// Ridge regression of `C x_d` on the flattened pixels with an unpenalized
/// intercept, solved in the sample (dual) space:
/// `W' = Xc' (Xc Xc' + ridge I)^{-1} Yc` on centred data.
pub fn fit_linear_map(ds: &PerceptionDataset, ridge: f64) -> Result<LinearPerceptionMap> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidArgument(format!("ridge weight must be finite and nonnegative, got {ridge}")));
    }
    let n = ds.len();
    let mut x = pixel_matrix(&ds.images);
    let positions = ds.positions();
    let l = positions[0].len();
    let mut y = DMatrix::from_fn(n, l, |i, j| positions[i][j]);
    let x_mean = x.row_mean();
    let y_mean = y.row_mean();
    for mut row in x.row_iter_mut() {
        row -= &x_mean;
    }
    for mut row in y.row_iter_mut() {
        row -= &y_mean;
    }
    let mut gram = &x * x.transpose();
    let mut min_norm = false;
    let dual = if ridge > 0.0 {
        for i in 0..n {
            gram[(i, i)] += ridge;
        }
        gram.cholesky()
            .ok_or_else(|| Error::Numerical("ridge Gram matrix is not positive definite".into()))?
            .solve(&y)
    } else {
        let svd = gram.svd(true, true);
        let top = svd.singular_values.max();
        let tol = top * n as f64 * f64::EPSILON;
        min_norm = svd.singular_values.iter().any(|&s| s <= tol);
        svd.pseudo_inverse(tol).map_err(|e| Error::Numerical(e.to_string()))? * &y
    };
    let weights = dual.transpose() * &x;
    let bias = y_mean.transpose() - &weights * x_mean.transpose();
    Ok(LinearPerceptionMap {
        weights,
        bias,
        ridge,
        width: ds.images[0].width,
        height: ds.images[0].height,
        min_norm,
    })
}

/// Relative residual of the regularized normal equations at the fitted map.
pub fn normal_equation_residual(ds: &PerceptionDataset, map: &LinearPerceptionMap) -> f64 {
    let mut x = pixel_matrix(&ds.images);
    let positions = ds.positions();
    let mut y = DMatrix::from_fn(ds.len(), positions[0].len(), |i, j| positions[i][j]);
    let x_mean = x.row_mean();
    let y_mean = y.row_mean();
    for mut row in x.row_iter_mut() {
        row -= &x_mean;
    }
    for mut row in y.row_iter_mut() {
        row -= &y_mean;
    }
    let xty = x.transpose() * &y;
    let wt = map.weights.transpose();
    let lhs = x.transpose() * (&x * &wt) + &wt * map.ridge;
    (lhs - &xty).amax() / xty.amax().max(f64::MIN_POSITIVE)
}

pub fn apply_map(map: &LinearPerceptionMap, z: &Image) -> Result<DVector<f64>> {
    if z.width != map.width || z.height != map.height {
        return Err(Error::Dimension(format!(
            "image is {}x{}, map expects {}x{}",
            z.width, z.height, map.width, map.height
        )));
    }
    Ok(&map.weights * DVector::from_column_slice(&z.pixels) + &map.bias)
}

/// `e(x) = p(q(C x)) - C x`.
pub fn error_function(
    map: &LinearPerceptionMap,
    scene: &CircleSceneConfig,
    c: &DMatrix<f64>,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    if x.len() != c.ncols() {
        return Err(Error::Dimension("state does not match C".into()));
    }
    let pos = c * x;
    Ok(apply_map(map, &render_circle(&pos, scene))? - pos)
}

/// Error at a position directly, for maps whose error factors through `C x`.
pub fn position_error(map: &LinearPerceptionMap, scene: &CircleSceneConfig, pos: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(apply_map(map, &render_circle(pos, scene))? - pos)
}
