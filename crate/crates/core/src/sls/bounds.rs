//! Closed-loop certificates: robustness margin, nominal closeness and the
//! perception-error budget they imply.
//!
//! Norms of `Phi_xe` and `Phi_xw H` are taken on the measured coordinates,
//! `C Phi_xe` and `C Phi_xw H`, because the safe set, the slope bound and the
//! training-data distances all live in measurement space. With `C = I` these
//! reduce to the plain response norms.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::quartet::ResponseQuartet;
use crate::error::{Error, Result};

/// `S ||C Phi_xe||` at or above this value violates the contraction condition.
pub const CONTRACTION_THRESHOLD: f64 = 1.0 - 1e-9;

/// Perception/safe-set quantities entering the robustness conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessParams {
    /// Safe-set radius `r`.
    pub radius: f64,
    /// Slope bound `S`.
    pub slope: f64,
    /// Training error bound `R0`.
    pub r0: f64,
    /// Bound on reference increments `||r_{k+1} - r_k||`.
    pub delta_ref: f64,
    /// Bound on the distance from the reference to the training data.
    pub r_ref: f64,
}

/// `||C Phi_xe||` in the induced l_inf norm.
pub fn xe_norm(q: &ResponseQuartet, c: &DMatrix<f64>) -> Result<f64> {
    Ok(q.phi_xe.left_mul(c)?.l1_norm())
}

/// `||C Phi_xw H||` in the induced l_inf norm.
pub fn xw_norm(q: &ResponseQuartet, c: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64> {
    Ok(q.phi_xw.left_mul(c)?.right_mul(h)?.l1_norm())
}

/// `(S + R0/r) ||C Phi_xe|| + (Delta/r) ||C Phi_xw H|| + r_ref/r`; values at
/// most 1 certify that the loop stays in the safe set.
pub fn robustness_margin(q: &ResponseQuartet, p: &RobustnessParams, c: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64> {
    if !(p.radius > 0.0) {
        return Err(Error::InvalidArgument("safe-set radius must be positive".into()));
    }
    let xe = xe_norm(q, c)?;
    let xw = xw_norm(q, c, h)?;
    Ok((p.slope + p.r0 / p.radius) * xe + (p.delta_ref / p.radius) * xw + p.r_ref / p.radius)
}

/// `Delta ||C Phi_xw H|| + r_ref`: distance to the training data reached
/// with exact measurements.
pub fn nominal_closeness_bound(q: &ResponseQuartet, delta_ref: f64, r_ref: f64, c: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64> {
    Ok(delta_ref * xw_norm(q, c, h)? + r_ref)
}

/// `(closeness + R0) / (1 - S ||C Phi_xe||)`, the bound on perception errors
/// along the closed loop.
pub fn gamma_bound(q: &ResponseQuartet, slope: f64, r0: f64, nominal_closeness: f64, c: &DMatrix<f64>) -> Result<f64> {
    gamma_from_norm(xe_norm(q, c)?, slope, r0, nominal_closeness)
}

pub fn gamma_from_norm(xe: f64, slope: f64, r0: f64, nominal_closeness: f64) -> Result<f64> {
    let gain = slope * xe;
    if gain >= CONTRACTION_THRESHOLD {
        return Err(Error::ContractionViolated(gain));
    }
    Ok((nominal_closeness + r0) / (1.0 - gain))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::FirOperator;

    fn quartet(xw: Vec<f64>, xe: Vec<f64>) -> ResponseQuartet {
        let t = xw.len();
        ResponseQuartet::new(
            FirOperator::new(xw.into_iter().map(|v| DMatrix::from_element(1, 1, v)).collect()).unwrap(),
            FirOperator::new(xe.into_iter().map(|v| DMatrix::from_element(1, 1, v)).collect()).unwrap(),
            FirOperator::zeros(1, 1, t),
            FirOperator::zeros(1, 1, t),
        )
        .unwrap()
    }

    fn one() -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0)
    }

    #[test]
    fn all_terms_vanish() {
        let q = quartet(vec![1.0, 0.5, 0.0], vec![0.0, 0.3, 0.0]);
        let p = RobustnessParams { radius: 2.0, slope: 0.0, r0: 0.0, delta_ref: 0.0, r_ref: 0.0 };
        assert_eq!(robustness_margin(&q, &p, &one(), &one()).unwrap(), 0.0);
        let p = RobustnessParams { r_ref: 2.0, ..p };
        assert_eq!(robustness_margin(&q, &p, &one(), &one()).unwrap(), 1.0);
        let p = RobustnessParams { radius: 0.0, ..p };
        assert!(robustness_margin(&q, &p, &one(), &one()).is_err());
    }

    #[test]
    fn closeness_uses_row_sums() {
        let q = quartet(vec![1.0, -0.5, 0.25], vec![0.0, 0.0, 0.0]);
        assert_eq!(nominal_closeness_bound(&q, 0.0, 0.3, &one(), &one()).unwrap(), 0.3);
        assert!((nominal_closeness_bound(&q, 0.2, 0.0, &one(), &one()).unwrap() - 0.35).abs() < 1e-15);
    }

    #[test]
    fn gamma_denominator() {
        let q = quartet(vec![1.0, 0.0], vec![0.0, 2.0]);
        assert_eq!(gamma_bound(&q, 0.0, 0.1, 0.4, &one()).unwrap(), 0.5);
        assert!((gamma_bound(&q, 0.25, 0.1, 0.4, &one()).unwrap() - 1.0).abs() < 1e-15);
        // 0.999999 sits below the 1 - 1e-9 threshold: finite but large bound.
        assert!(gamma_from_norm(1.0, 0.999999, 0.0, 1.0).unwrap() > 9.9e5);
        assert!(matches!(gamma_from_norm(1.0, 1.0 - 1e-10, 0.0, 1.0), Err(Error::ContractionViolated(_))));
        assert!(matches!(gamma_from_norm(2.0, 0.5, 0.0, 1.0), Err(Error::ContractionViolated(_))));
    }
}
