use thiserror::Error;

/// Errors raised across the control, synthesis and perception pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty signal")]
    EmptySignal,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("riccati iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    RiccatiNonConvergence { iterations: usize, residual: f64 },

    #[error("system is not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("contraction condition violated: S*||Phi_xe|| = {0:.9} >= 1")]
    ContractionViolated(f64),

    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },

    #[error("tap 1 of Phi_xw is not the identity (max deviation {0:.3e})")]
    NotIdentityLeadTap(f64),

    #[error("linear solve failed: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
