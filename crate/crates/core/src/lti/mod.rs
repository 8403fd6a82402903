//! Discrete-time linear systems, signals, FIR operators and closed-loop simulation.

pub mod controller;
pub mod fir;
pub mod riccati;
pub mod signal;
pub mod sim;
pub mod system;

pub use controller::{Controller, FirController, StateSpaceController};
pub use fir::FirOperator;
pub use riccati::{closed_loop_matrices, dare_residual, dare_solve, kalman_gain, lqg_controller, lqr_gain};
pub use signal::Signal;
pub use sim::{simulate_closed_loop, Trajectory};
pub use system::{double_integrator, spectral_radius, LtiSystem};
