//! Sparse convex QP/LP solver.
//!
//! Solves
//!
//! ```text
//! minimize    1/2 x' diag(p) x + q' x
//! subject to  A x + s = b,   s_i = 0 (first n_eq rows),  s_i >= 0 (rest)
//! ```
//!
//! with a homogeneous self-dual embedding and a Mehrotra predictor-corrector
//! interior-point method. Newton systems are reduced to a quasi-definite KKT
//! matrix factored by [`ldl::LdlFactor`]. Everything is sequential and
//! deterministic for a fixed problem.

pub mod csc;
mod ipm;
pub mod ldl;

pub use csc::{CscMatrix, Triplets};
pub use ipm::solve_qp;

use serde::{Deserialize, Serialize};

/// Convex program in the standard form above.
#[derive(Debug, Clone)]
pub struct QpProblem {
    /// Diagonal of the quadratic term; empty for an LP.
    pub p_diag: Vec<f64>,
    pub q: Vec<f64>,
    pub a: CscMatrix,
    pub b: Vec<f64>,
    /// Number of leading rows of `a` that are equalities.
    pub n_eq: usize,
}

impl QpProblem {
    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.q.iter().zip(x).map(|(q, x)| q * x).sum();
        let quad: f64 = self.p_diag.iter().zip(x).map(|(p, x)| p * x * x).sum();
        lin + 0.5 * quad
    }

    /// Max equality violation and max inequality violation of `x`.
    pub fn violation(&self, x: &[f64]) -> (f64, f64) {
        let mut ax = vec![0.0; self.num_rows()];
        self.a.gemv(1.0, x, &mut ax);
        let mut eq: f64 = 0.0;
        let mut ineq: f64 = 0.0;
        for (i, (axi, bi)) in ax.iter().zip(&self.b).enumerate() {
            if i < self.n_eq {
                eq = eq.max((axi - bi).abs());
            } else {
                ineq = ineq.max(axi - bi);
            }
        }
        (eq, ineq.max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Multipliers of `A x + s = b`.
    pub z: Vec<f64>,
    pub s: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    /// Farkas vector `y` with `A'y = 0`, `y >= 0` on inequality rows and
    /// `b'y = -1` (primal infeasibility), or a ray `x` with `q'x = -1`,
    /// `A x <= 0` (dual infeasibility).
    pub certificate: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub max_iterations: usize,
    pub eps_feasibility: f64,
    pub eps_gap_abs: f64,
    pub eps_gap_rel: f64,
    pub eps_infeasible: f64,
    pub static_regularization: f64,
    pub refinement_steps: usize,
    pub equilibration_passes: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            eps_feasibility: 1e-10,
            eps_gap_abs: 1e-9,
            eps_gap_rel: 1e-9,
            eps_infeasible: 1e-9,
            static_regularization: 1e-8,
            refinement_steps: 10,
            equilibration_passes: 10,
        }
    }
}
