//! End-to-end reproductions: tracking rollouts with perception in the loop,
//! error-versus-distance profiles and the necessity-of-robustness example.

pub mod config;
pub mod necessity;
pub mod pipeline;
pub mod profile;
pub mod report;
pub mod rollout;

pub use config::ExperimentConfig;
