//! Synthetic images of a moving disc and linear maps that read its position.

pub mod dataset;
pub mod map;
pub mod scene;

pub use dataset::{generate_dataset, DatasetMeta, PerceptionDataset};
pub use map::{
    apply_map, error_function, fit_linear_map, normal_equation_residual, position_error, LinearPerceptionMap,
    DEFAULT_RIDGE_PER_PIXEL,
};
pub use scene::{render_circle, CircleSceneConfig, Image, Window};
