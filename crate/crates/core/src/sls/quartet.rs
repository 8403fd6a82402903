use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{closed_loop_matrices, simulate_closed_loop, Controller, FirOperator, LtiSystem, Signal, StateSpaceController};

/// Closed-loop maps `x = Phi_xw d + Phi_xe e`, `u = Phi_uw d + Phi_ue e`
/// from a disturbance `d` entering the state directly and the measurement
/// error `e`, all as strictly proper FIR operators of a common horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseQuartet {
    pub phi_xw: FirOperator,
    pub phi_xe: FirOperator,
    pub phi_uw: FirOperator,
    pub phi_ue: FirOperator,
}

impl ResponseQuartet {
    pub fn new(phi_xw: FirOperator, phi_xe: FirOperator, phi_uw: FirOperator, phi_ue: FirOperator) -> Result<Self> {
        let t = phi_xw.horizon();
        if [&phi_xe, &phi_uw, &phi_ue].iter().any(|f| f.horizon() != t) {
            return Err(Error::Dimension("response horizons differ".into()));
        }
        let (n, n2) = phi_xw.shape();
        let (n3, l) = phi_xe.shape();
        let (m, n4) = phi_uw.shape();
        if n != n2 || n3 != n || n4 != n || phi_ue.shape() != (m, l) {
            return Err(Error::Dimension("response shapes do not form a quartet".into()));
        }
        Ok(Self { phi_xw, phi_xe, phi_uw, phi_ue })
    }

    pub fn horizon(&self) -> usize {
        self.phi_xw.horizon()
    }

    /// `(n, m, l)`: state, input and measurement dimensions.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.phi_xw.shape().0, self.phi_uw.shape().0, self.phi_xe.shape().1)
    }

    /// Max-entry deviation of `Phi_xw(1)` from the identity.
    pub fn lead_tap_deviation(&self) -> f64 {
        let t1 = self.phi_xw.tap(1);
        (t1.clone() - DMatrix::identity(t1.nrows(), t1.ncols())).amax()
    }

    pub fn check_lead_tap(&self, tol: f64) -> Result<()> {
        let dev = self.lead_tap_deviation();
        if dev > tol {
            return Err(Error::NotIdentityLeadTap(dev));
        }
        Ok(())
    }

    /// Largest entrywise difference over all four tap sequences.
    pub fn max_tap_difference(&self, other: &ResponseQuartet) -> f64 {
        let t = self.horizon().max(other.horizon());
        let pairs = [
            (&self.phi_xw, &other.phi_xw),
            (&self.phi_xe, &other.phi_xe),
            (&self.phi_uw, &other.phi_uw),
            (&self.phi_ue, &other.phi_ue),
        ];
        let mut worst: f64 = 0.0;
        for (a, b) in pairs {
            for k in 1..=t {
                worst = worst.max((a.tap(k) - b.tap(k)).amax());
            }
        }
        worst
    }

    /// Truncated impulse responses of the loop closed by a strictly proper
    /// state-space controller.
    pub fn from_closed_loop(sys: &LtiSystem, ctrl: &StateSpaceController, horizon: usize) -> Result<Self> {
        let sys_i = sys.clone().with_h(DMatrix::identity(sys.n(), sys.n()))?;
        let (acl, be) = closed_loop_matrices(&sys_i, ctrl);
        let n = sys.n();
        let nz = ctrl.order();
        let mut bw = DMatrix::zeros(n + nz, n);
        bw.view_mut((0, 0), (n, n)).fill_with_identity();
        let mut cx = DMatrix::zeros(n, n + nz);
        cx.view_mut((0, 0), (n, n)).fill_with_identity();
        let mut cu = DMatrix::zeros(sys.m(), n + nz);
        cu.view_mut((0, n), (sys.m(), nz)).copy_from(&ctrl.ck);
        let mut pw = bw;
        let mut pe = be;
        let (mut xw, mut xe, mut uw, mut ue) = (vec![], vec![], vec![], vec![]);
        for _ in 0..horizon {
            xw.push(&cx * &pw);
            xe.push(&cx * &pe);
            uw.push(&cu * &pw);
            ue.push(&cu * &pe);
            pw = &acl * pw;
            pe = &acl * pe;
        }
        Self::new(FirOperator::new(xw)?, FirOperator::new(xe)?, FirOperator::new(uw)?, FirOperator::new(ue)?)
    }
}

/// Measures the four closed-loop responses of `controller` on `sys` by
/// unit-impulse experiments: one per state coordinate (disturbance entering
/// the state directly) and one per measurement coordinate (additive sensor
/// error), with exact linear sensing `y = C x + e`.
pub fn measure_responses(sys: &LtiSystem, controller: &mut dyn Controller, horizon: usize) -> Result<ResponseQuartet> {
    let n = sys.n();
    let m = sys.m();
    let l = sys.l();
    let sys_i = sys.clone().with_h(DMatrix::identity(n, n))?;
    let steps = horizon + 1;
    let mut xw = vec![DMatrix::zeros(n, n); horizon];
    let mut uw = vec![DMatrix::zeros(m, n); horizon];
    let mut xe = vec![DMatrix::zeros(n, l); horizon];
    let mut ue = vec![DMatrix::zeros(m, l); horizon];
    for j in 0..n {
        controller.reset();
        let c = sys.c.clone();
        let traj = simulate_closed_loop(&sys_i, controller, |_, x| &c * x, &Signal::impulse(n, j, steps), steps, None)?;
        for t in 1..=horizon {
            xw[t - 1].set_column(j, &traj.x[t]);
            uw[t - 1].set_column(j, &traj.u[t]);
        }
    }
    for j in 0..l {
        controller.reset();
        let c = sys.c.clone();
        let sensor = |k: usize, x: &DVector<f64>| {
            let mut y = &c * x;
            if k == 0 {
                y[j] += 1.0;
            }
            y
        };
        let traj = simulate_closed_loop(&sys_i, controller, sensor, &Signal::zeros(n, steps), steps, None)?;
        for t in 1..=horizon {
            xe[t - 1].set_column(j, &traj.x[t]);
            ue[t - 1].set_column(j, &traj.u[t]);
        }
    }
    controller.reset();
    ResponseQuartet::new(FirOperator::new(xw)?, FirOperator::new(xe)?, FirOperator::new(uw)?, FirOperator::new(ue)?)
}
