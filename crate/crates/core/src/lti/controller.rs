use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Causal output-feedback law driven by the simulator.
///
/// At step k the simulator first asks for `u_k` (strictly proper laws
/// have only seen `y_{0:k-1}`), then hands over `y_k`.
pub trait Controller {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn control(&mut self) -> DVector<f64>;
    fn observe(&mut self, y: &DVector<f64>);
    fn reset(&mut self);
}

/// Strictly proper state-space law
/// `zeta_{k+1} = Ak zeta_k + Bk y_k`, `u_k = Ck zeta_k`,
/// so `u_k` only depends on `y_{0:k-1}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateSpaceController {
    #[serde(with = "crate::serde_mat")]
    pub ak: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub bk: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub ck: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::vector")]
    pub state: DVector<f64>,
}

impl StateSpaceController {
    pub fn new(ak: DMatrix<f64>, bk: DMatrix<f64>, ck: DMatrix<f64>) -> Result<Self> {
        let nz = ak.nrows();
        if ak.ncols() != nz || bk.nrows() != nz || ck.ncols() != nz {
            return Err(Error::Dimension("controller realization does not conform".into()));
        }
        Ok(Self { ak, bk, ck, state: DVector::zeros(nz) })
    }

    pub fn order(&self) -> usize {
        self.ak.nrows()
    }
}

impl Controller for StateSpaceController {
    fn input_dim(&self) -> usize {
        self.bk.ncols()
    }

    fn output_dim(&self) -> usize {
        self.ck.nrows()
    }

    fn control(&mut self) -> DVector<f64> {
        &self.ck * &self.state
    }

    fn observe(&mut self, y: &DVector<f64>) {
        self.state = &self.ak * &self.state + &self.bk * y;
    }

    fn reset(&mut self) {
        self.state.fill(0.0);
    }
}

/// `u_k = sum_{t=1}^{T_K} K(t) y_{k-t}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FirController {
    #[serde(with = "crate::serde_mat::seq")]
    pub taps: Vec<DMatrix<f64>>,
    /// Max-entry magnitude of the first dropped tap when the law was truncated.
    pub truncation: f64,
    #[serde(skip)]
    history: VecDeque<DVector<f64>>,
}

impl FirController {
    pub fn new(taps: Vec<DMatrix<f64>>, truncation: f64) -> Result<Self> {
        let first = taps
            .first()
            .ok_or_else(|| Error::InvalidArgument("FIR controller needs at least one tap".into()))?;
        let shape = first.shape();
        if taps.iter().any(|k| k.shape() != shape) {
            return Err(Error::Dimension("controller taps differ in shape".into()));
        }
        Ok(Self { taps, truncation, history: VecDeque::new() })
    }

    pub fn horizon(&self) -> usize {
        self.taps.len()
    }
}

impl Controller for FirController {
    fn input_dim(&self) -> usize {
        self.taps[0].ncols()
    }

    fn output_dim(&self) -> usize {
        self.taps[0].nrows()
    }

    fn control(&mut self) -> DVector<f64> {
        // history[0] = y_{k-1}
        let mut u = DVector::zeros(self.output_dim());
        for (k, y) in self.taps.iter().zip(self.history.iter()) {
            u += k * y;
        }
        u
    }

    fn observe(&mut self, y: &DVector<f64>) {
        self.history.push_front(y.clone());
        self.history.truncate(self.taps.len());
    }

    fn reset(&mut self) {
        self.history.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fir_controller_delays_one_step() {
        let mut k = FirController::new(vec![DMatrix::from_element(1, 1, 2.0), DMatrix::from_element(1, 1, -1.0)], 0.0)
            .unwrap();
        assert_eq!(k.control()[0], 0.0);
        k.observe(&DVector::from_element(1, 1.0));
        assert_eq!(k.control()[0], 2.0);
        k.observe(&DVector::from_element(1, 0.0));
        assert_eq!(k.control()[0], -1.0);
        k.observe(&DVector::from_element(1, 0.0));
        assert_eq!(k.control()[0], 0.0);
    }

    #[test]
    fn state_space_strictly_proper() {
        let mut c = StateSpaceController::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 3.0),
        )
        .unwrap();
        assert_eq!(c.control()[0], 0.0);
        c.observe(&DVector::from_element(1, 2.0));
        assert_eq!(c.control()[0], 6.0);
        c.observe(&DVector::from_element(1, 0.0));
        assert_eq!(c.control()[0], 3.0);
        c.reset();
        assert_eq!(c.control()[0], 0.0);
    }

    #[test]
    fn nonconformal_realization_rejected() {
        let r = StateSpaceController::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(3, 1),
            DMatrix::zeros(1, 2),
        );
        assert!(r.is_err());
    }
}
