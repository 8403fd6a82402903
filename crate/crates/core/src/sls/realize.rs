//! Controllers achieving a given response quartet.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::quartet::ResponseQuartet;
use crate::error::{Error, Result};
use crate::lti::{Controller, FirController, FirOperator, StateSpaceController};

const LEAD_TAP_TOLERANCE: f64 = 1e-10;

/// `G = Phi_xw^{-1} Phi_xe` by tap recursion, `len` taps:
/// `G(k) = Phi_xe(k+1) - sum_{j=2}^{k} Phi_xw(j) G(k+1-j)`.
pub fn divide_responses(q: &ResponseQuartet, len: usize) -> Result<FirOperator> {
    q.check_lead_tap(LEAD_TAP_TOLERANCE)?;
    let mut g: Vec<DMatrix<f64>> = Vec::with_capacity(len);
    for k in 1..=len {
        let mut gk = q.phi_xe.tap(k + 1);
        for j in 2..=k.min(q.horizon()) {
            gk -= q.phi_xw.tap(j) * &g[k - j];
        }
        g.push(gk);
    }
    FirOperator::new(g)
}

/// FIR law `K = Phi_ue - Phi_uw Phi_xw^{-1} Phi_xe` truncated to `T_K`
/// taps. The controller's `truncation` field holds the max-entry magnitude
/// of the first dropped tap `K(T_K + 1)`.
pub fn realize_controller(q: &ResponseQuartet, taps: usize) -> Result<FirController> {
    if taps < q.horizon() {
        return Err(Error::InvalidArgument(format!(
            "controller length {taps} is shorter than the response horizon {}",
            q.horizon()
        )));
    }
    let g = divide_responses(q, taps + 1)?;
    let ug = q.phi_uw.compose(&g)?;
    let k: Vec<DMatrix<f64>> = (1..=taps + 1).map(|t| q.phi_ue.tap(t) - ug.tap(t)).collect();
    let truncation = k[taps].amax();
    FirController::new(k[..taps].to_vec(), truncation)
}

/// Exact finite-memory realization of the quartet:
///
/// ```text
/// beta_k = -sum_{t>=2} Phi_xw(t) beta_{k+1-t} - sum_{t>=2} Phi_xe(t) y_{k+1-t}
/// u_k    =  sum_{t>=1} Phi_uw(t) beta_{k-t}   + sum_{t>=1} Phi_ue(t) y_{k-t}
/// ```
///
/// Its transfer function is `Phi_ue - Phi_uw Phi_xw^{-1} Phi_xe` without
/// truncation, and it only stores the last `T` values of `beta` and `y`.
#[derive(Debug, Clone)]
pub struct SlsController {
    xw: Vec<DMatrix<f64>>,
    xe: Vec<DMatrix<f64>>,
    uw: Vec<DMatrix<f64>>,
    ue: Vec<DMatrix<f64>>,
    beta: VecDeque<DVector<f64>>,
    y: VecDeque<DVector<f64>>,
}

impl SlsController {
    pub fn new(q: &ResponseQuartet) -> Result<Self> {
        q.check_lead_tap(LEAD_TAP_TOLERANCE)?;
        Ok(Self {
            xw: q.phi_xw.taps().to_vec(),
            xe: q.phi_xe.taps().to_vec(),
            uw: q.phi_uw.taps().to_vec(),
            ue: q.phi_ue.taps().to_vec(),
            beta: VecDeque::new(),
            y: VecDeque::new(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.xw.len()
    }

    /// The same law as a strictly proper state-space controller on the
    /// stacked memory `[beta_{k-1}; ...; beta_{k-T}; y_{k-1}; ...; y_{k-T}]`.
    pub fn to_state_space(&self) -> Result<StateSpaceController> {
        let t = self.horizon();
        let n = self.xw[0].nrows();
        let l = self.xe[0].ncols();
        let m = self.uw[0].nrows();
        let yoff = t * n;
        let dim = t * (n + l);
        let mut ak = DMatrix::zeros(dim, dim);
        let mut bk = DMatrix::zeros(dim, l);
        let mut ck = DMatrix::zeros(m, dim);
        for s in 2..=t {
            ak.view_mut((0, (s - 2) * n), (n, n)).copy_from(&(-&self.xw[s - 1]));
            ak.view_mut((0, yoff + (s - 2) * l), (n, l)).copy_from(&(-&self.xe[s - 1]));
        }
        for i in 0..t - 1 {
            ak.view_mut(((i + 1) * n, i * n), (n, n)).fill_with_identity();
            ak.view_mut((yoff + (i + 1) * l, yoff + i * l), (l, l)).fill_with_identity();
        }
        bk.view_mut((yoff, 0), (l, l)).fill_with_identity();
        for s in 1..=t {
            ck.view_mut((0, (s - 1) * n), (m, n)).copy_from(&self.uw[s - 1]);
            ck.view_mut((0, yoff + (s - 1) * l), (m, l)).copy_from(&self.ue[s - 1]);
        }
        StateSpaceController::new(ak, bk, ck)
    }
}

impl Controller for SlsController {
    fn input_dim(&self) -> usize {
        self.xe[0].ncols()
    }

    fn output_dim(&self) -> usize {
        self.uw[0].nrows()
    }

    fn control(&mut self) -> DVector<f64> {
        let n = self.xw[0].nrows();
        let mut beta = DVector::zeros(n);
        for (s, b) in self.beta.iter().enumerate().take(self.horizon() - 1) {
            beta -= &self.xw[s + 1] * b;
        }
        for (s, y) in self.y.iter().enumerate().take(self.horizon() - 1) {
            beta -= &self.xe[s + 1] * y;
        }
        let mut u = DVector::zeros(self.output_dim());
        for (s, b) in self.beta.iter().enumerate() {
            u += &self.uw[s] * b;
        }
        for (s, y) in self.y.iter().enumerate() {
            u += &self.ue[s] * y;
        }
        self.beta.push_front(beta);
        self.beta.truncate(self.horizon());
        u
    }

    fn observe(&mut self, y: &DVector<f64>) {
        self.y.push_front(y.clone());
        self.y.truncate(self.horizon());
    }

    fn reset(&mut self) {
        self.beta.clear();
        self.y.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{double_integrator, lqg_controller, LtiSystem};
    use crate::sls::quartet::measure_responses;

    fn nilpotent_loop() -> (LtiSystem, ResponseQuartet) {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let sys = LtiSystem::new(a, b, DMatrix::identity(2, 2), DMatrix::identity(2, 2), 1.0).unwrap();
        let ctrl = StateSpaceController::new(
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(1, 2, &[0.0, 0.7]),
        )
        .unwrap();
        let q = ResponseQuartet::from_closed_loop(&sys, &ctrl, 8).unwrap();
        (sys, q)
    }

    #[test]
    fn zero_numerator_gives_zero_law() {
        let (_, q) = nilpotent_loop();
        let q = ResponseQuartet::new(
            q.phi_xw.clone(),
            q.phi_xe.clone(),
            FirOperator::zeros(1, 2, 8),
            FirOperator::zeros(1, 2, 8),
        )
        .unwrap();
        let k = realize_controller(&q, 8).unwrap();
        assert!(k.taps.iter().all(|t| t.amax() == 0.0));
        assert_eq!(k.truncation, 0.0);
    }

    #[test]
    fn division_reconvolves() {
        let sys = double_integrator(0.5, 1).unwrap().with_c(DMatrix::identity(2, 2)).unwrap();
        let i2 = DMatrix::identity(2, 2);
        let ctrl = lqg_controller(&sys, &i2, &DMatrix::identity(1, 1), &i2, &i2).unwrap();
        let q = ResponseQuartet::from_closed_loop(&sys, &ctrl, 30).unwrap();
        let g = divide_responses(&q, 30).unwrap();
        let back = q.phi_xw.compose(&g).unwrap();
        for t in 1..=30 {
            assert!((back.tap(t) - q.phi_xe.tap(t)).amax() < 1e-10, "tap {t}");
        }
    }

    #[test]
    fn realized_laws_reproduce_fir_loop() {
        let (sys, q) = nilpotent_loop();
        let mut exact = SlsController::new(&q).unwrap();
        let measured = measure_responses(&sys, &mut exact, 8).unwrap();
        assert!(q.max_tap_difference(&measured) < 1e-12);

        let mut ss = exact.to_state_space().unwrap();
        let measured = measure_responses(&sys, &mut ss, 8).unwrap();
        assert!(q.max_tap_difference(&measured) < 1e-12);

        let mut fir = realize_controller(&q, 40).unwrap();
        assert!(fir.truncation < 1e-12, "truncation {}", fir.truncation);
        let measured = measure_responses(&sys, &mut fir, 8).unwrap();
        assert!(q.max_tap_difference(&measured) < 1e-12);
    }

    #[test]
    fn non_identity_lead_tap_rejected() {
        let (_, q) = nilpotent_loop();
        let mut taps = q.phi_xw.clone().into_taps();
        taps[0][(0, 0)] = 2.0;
        let bad = ResponseQuartet::new(FirOperator::new(taps).unwrap(), q.phi_xe, q.phi_uw, q.phi_ue).unwrap();
        assert!(matches!(realize_controller(&bad, 8), Err(Error::NotIdentityLeadTap(_))));
        assert!(SlsController::new(&bad).is_err());
    }
}
