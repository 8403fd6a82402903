//! System-level synthesis over finite impulse responses.

pub mod bounds;
pub mod constraints;
pub mod quartet;
pub mod realize;
pub mod synth;
pub mod tracking;

pub use bounds::{gamma_bound, nominal_closeness_bound, robustness_margin, xe_norm, xw_norm, RobustnessParams};
pub use constraints::{assemble_constraints, Block, ConstraintSystem, RowLabel, VarLayout};
pub use quartet::{measure_responses, ResponseQuartet};
pub use realize::{divide_responses, realize_controller, SlsController};
pub use tracking::{augment_for_tracking, position_embedding, reference_increments, tracking_error_system};
pub use synth::{
    evaluate_margins, synthesize, synthesize_h2_robust, synthesize_l1, GammaEvaluation, Margins, SynthesisMode,
    SynthesisResult, SynthesisSpec, SynthesisStatus,
};
