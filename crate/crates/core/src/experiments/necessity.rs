//! Necessity of the robustness constraint: a slope-bounded linear error
//! that destabilizes the unconstrained optimal loop once `||Phi_xe|| >= 1/S`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::NecessityConfig;
use crate::error::{Error, Result};
use crate::lti::{closed_loop_matrices, double_integrator, lqg_controller, spectral_radius, LtiSystem};
use crate::sls::{xe_norm, ResponseQuartet, SlsController, SynthesisMode, SynthesisSpec, SynthesisStatus};

/// Taps summed for the impulse response of the unconstrained loop.
const IMPULSE_TAPS: usize = 4000;
/// Spectral radii above `1 + UNSTABLE_MARGIN` are reported unstable.
pub const UNSTABLE_MARGIN: f64 = 1e-9;
/// Spectral radii within this distance below 1 are reported marginal.
pub const MARGINAL_BAND: f64 = 1e-6;
/// Largest tolerated gap between `||Phi_xe||` and its DC gain.
const DC_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityVerdict {
    Stable,
    /// Spectral radius within `MARGINAL_BAND` of 1: not asymptotically stable.
    Marginal,
    Unstable,
    /// The capped program had no solution.
    Infeasible,
}

impl StabilityVerdict {
    pub fn from_radius(rho: f64) -> Self {
        if rho > 1.0 + UNSTABLE_MARGIN {
            Self::Unstable
        } else if rho >= 1.0 - MARGINAL_BAND {
            Self::Marginal
        } else {
            Self::Stable
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Stable => "stable",
            Self::Marginal => "marginal",
            Self::Unstable => "unstable",
            Self::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NecessityRow {
    pub alpha_factor: f64,
    pub alpha: f64,
    /// `||Phi_xe||` of the capped H2 solution.
    pub xe_norm: Option<f64>,
    pub spectral_radius: Option<f64>,
    pub verdict: StabilityVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NecessityReport {
    pub dt: f64,
    pub horizon: usize,
    /// `||Phi_xe||` of the unconstrained LQG loop.
    pub unconstrained_xe_norm: f64,
    /// `S = 1 / ||Phi_xe||`.
    pub slope: f64,
    /// `||Phi_xe(1)||`, the induced norm of the DC gain.
    pub dc_gain_norm: f64,
    /// False when the DC gain does not attain the operator norm, in which
    /// case the rank-one error below need not destabilize anything.
    pub construction_applicable: bool,
    /// Error derivative `J` with `e = J x`.
    #[serde(with = "crate::serde_mat")]
    pub j: DMatrix<f64>,
    pub rows: Vec<NecessityRow>,
}

/// Single-axis double integrator with both states measured.
pub fn necessity_plant(dt: f64) -> Result<LtiSystem> {
    double_integrator(dt, 1)?.with_c(DMatrix::identity(2, 2))
}

/// Rank-one error derivative with `||J||_inf = S` that aligns with the
/// largest row of the DC gain `G`: `J = S s e_i'` where `i` maximizes the
/// row sum of `|G|` and `s_j = sign(G_ij)`, so `G J` has eigenvalue
/// `S ||G||_inf`.
pub fn adversarial_derivative(dc_gain: &DMatrix<f64>, slope: f64) -> DMatrix<f64> {
    let (n, l) = dc_gain.shape();
    let row_sum = |i: usize| dc_gain.row(i).iter().map(|v| v.abs()).sum::<f64>();
    let i_max = (0..n).fold(0, |best, i| if row_sum(i) > row_sum(best) { i } else { best });
    let mut j = DMatrix::zeros(l, n);
    for c in 0..l {
        j[(c, i_max)] = slope * if dc_gain[(i_max, c)] < 0.0 { -1.0 } else { 1.0 };
    }
    j
}

fn capped_spec(horizon: usize, alpha: f64) -> SynthesisSpec {
    SynthesisSpec {
        horizon,
        q_diag: vec![1.0, 1.0],
        r_diag: vec![1.0],
        eps_w: 1.0,
        eps_e: 1.0,
        delta_ref: 0.0,
        r_ref: 0.0,
        radius: 0.0,
        slope: 0.0,
        r0: 0.0,
        alpha: Some(alpha),
        mode: SynthesisMode::RobustH2,
    }
}

/// Spectral radius of the plant in feedback with the exact realization of
/// `q` when the sensor reports `y = (C + J) x`.
pub fn perturbed_loop_radius(sys: &LtiSystem, q: &ResponseQuartet, j: &DMatrix<f64>) -> Result<f64> {
    let ctrl = SlsController::new(q)?.to_state_space()?;
    let perturbed = sys.clone().with_c(&sys.c + j)?;
    let (acl, _) = closed_loop_matrices(&perturbed, &ctrl);
    Ok(spectral_radius(&acl))
}

pub fn necessity_demo(cfg: &NecessityConfig) -> Result<NecessityReport> {
    let sys = necessity_plant(cfg.dt)?;
    let i2 = DMatrix::identity(2, 2);
    let lqg = lqg_controller(&sys, &i2, &DMatrix::identity(1, 1), &i2, &i2)?;
    let bar = ResponseQuartet::from_closed_loop(&sys, &lqg, IMPULSE_TAPS)?;
    if !(bar.phi_xe.tap(IMPULSE_TAPS).amax() < 1e-14) {
        return Err(Error::Numerical("unconstrained impulse response has not decayed".into()));
    }
    let norm = xe_norm(&bar, &sys.c)?;
    let slope = 1.0 / norm;
    let g = bar.phi_xe.dc_gain();
    let dc_norm = g.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let applicable = (norm - dc_norm).abs() <= DC_TOLERANCE * norm.max(1.0);
    let j = adversarial_derivative(&g, slope);

    let mut rows = Vec::with_capacity(cfg.alpha_factors.len());
    for &factor in &cfg.alpha_factors {
        let alpha = factor / slope;
        let res = crate::sls::synthesize(&sys, &capped_spec(cfg.horizon, alpha))?;
        let row = match (&res.status, &res.quartet) {
            (SynthesisStatus::Infeasible, _) | (_, None) => NecessityRow {
                alpha_factor: factor,
                alpha,
                xe_norm: None,
                spectral_radius: None,
                verdict: StabilityVerdict::Infeasible,
            },
            (_, Some(q)) => {
                let rho = perturbed_loop_radius(&sys, q, &j)?;
                NecessityRow {
                    alpha_factor: factor,
                    alpha,
                    xe_norm: Some(xe_norm(q, &sys.c)?),
                    spectral_radius: Some(rho),
                    verdict: StabilityVerdict::from_radius(rho),
                }
            }
        };
        rows.push(row);
    }
    Ok(NecessityReport {
        dt: cfg.dt,
        horizon: cfg.horizon,
        unconstrained_xe_norm: norm,
        slope,
        dc_gain_norm: dc_norm,
        construction_applicable: applicable,
        j,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_thresholds() {
        assert_eq!(StabilityVerdict::from_radius(0.99), StabilityVerdict::Stable);
        assert_eq!(StabilityVerdict::from_radius(1.0 - 1e-7), StabilityVerdict::Marginal);
        assert_eq!(StabilityVerdict::from_radius(1.0 + 1e-10), StabilityVerdict::Marginal);
        assert_eq!(StabilityVerdict::from_radius(1.0 + 1e-8), StabilityVerdict::Unstable);
    }

    #[test]
    fn derivative_aligns_with_dc_gain() {
        let g = DMatrix::from_row_slice(2, 2, &[-2.0, -1.0, 0.5, 0.1]);
        let j = adversarial_derivative(&g, 1.0 / 3.0);
        let expect = DMatrix::from_row_slice(2, 2, &[-1.0 / 3.0, 0.0, -1.0 / 3.0, 0.0]);
        assert!((&j - expect).amax() < 1e-15);
        let rho = spectral_radius(&(&g * &j));
        assert!((rho - 1.0).abs() < 1e-12);
    }
}
