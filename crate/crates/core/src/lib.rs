//! Perception-aware robust control for linear systems.
//!
//! The crate learns a linear perception map from synthetic images, bounds its
//! error near the training data, and synthesizes output-feedback controllers
//! whose closed loop provably stays where that bound holds.

mod error;
pub mod experiments;
pub mod lti;
pub mod perception;
pub mod safety;
pub mod serde_mat;
pub mod sls;
pub mod solver;

pub use error::{Error, Result};
