//! Riccati equations, LQR gains and the strictly proper LQG baseline.

use nalgebra::DMatrix;

use super::controller::StateSpaceController;
use super::system::{spectral_radius, LtiSystem};
use crate::error::{Error, Result};

pub const DARE_MAX_ITERATIONS: usize = 10_000;
pub const DARE_TOLERANCE: f64 = 1e-10;

fn solve(lhs: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    lhs.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::Numerical("singular matrix in Riccati step".into()))
}

fn riccati_map(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let at_p = a.transpose() * p;
    let bt_p = b.transpose() * p;
    let gain = solve(&(&bt_p * b + r), &(&bt_p * a))?;
    let next = &at_p * a - &at_p * b * gain + q;
    Ok((&next + next.transpose()) * 0.5)
}

/// Max-entry residual of the DARE at `p`.
pub fn dare_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    match riccati_map(a, b, q, r, p) {
        Ok(next) => (p - next).amax(),
        Err(_) => f64::INFINITY,
    }
}

/// Solves `P = A'PA - A'PB (B'PB + R)^{-1} B'PA + Q` by fixed-point
/// iteration from `P = Q`.
pub fn dare_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::Dimension("DARE operands do not conform".into()));
    }
    let mut p = q.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..DARE_MAX_ITERATIONS {
        let next = riccati_map(a, b, q, r, &p)?;
        residual = (&next - &p).amax();
        p = next;
        if !residual.is_finite() {
            break;
        }
        if residual <= DARE_TOLERANCE {
            // Confirm on the returned iterate itself.
            let check = dare_residual(a, b, q, r, &p);
            if check <= DARE_TOLERANCE {
                return Ok(p);
            }
        }
    }
    Err(Error::RiccatiNonConvergence { iterations: DARE_MAX_ITERATIONS, residual })
}

/// `K = -(B'PB + R)^{-1} B'PA`, so that `u = K x`.
pub fn lqr_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let p = dare_solve(a, b, q, r)?;
    let bt_p = b.transpose() * &p;
    Ok(-solve(&(&bt_p * b + r), &(bt_p * a))?)
}

/// Steady-state Kalman measurement-update gain `L_f = P C'(C P C' + V)^{-1}`,
/// with `P` the prior covariance from the dual DARE `(A', C', W, V)`.
pub fn kalman_gain(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    w: &DMatrix<f64>,
    v: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let p = dare_solve(&a.transpose(), &c.transpose(), w, v)?;
    let s = c * &p * c.transpose() + v;
    // L = P C' S^{-1}  <=>  S' L' = C P'
    Ok(solve(&s.transpose(), &(c * p.transpose()))?.transpose())
}

/// Certainty-equivalent LQG law on the one-step predictor:
///
/// ```text
/// xhat_{k+1} = A xhat_k + B u_k + A L_f (y_k - C xhat_k)
/// u_k        = K xhat_k
/// ```
///
/// `u_k` uses `y_{0:k-1}` only. `W` is the covariance of the state
/// disturbance `H w`, `V` that of the measurement error.
pub fn lqg_controller(
    sys: &LtiSystem,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    w: &DMatrix<f64>,
    v: &DMatrix<f64>,
) -> Result<StateSpaceController> {
    let (a, b, c) = (&sys.a, &sys.b, &sys.c);
    let k = lqr_gain(a, b, q, r)?;
    let lf = kalman_gain(a, c, w, v)?;
    let lp = a * &lf;

    let rho_ctrl = spectral_radius(&(a + b * &k));
    let rho_est = spectral_radius(&(a - &lp * c));
    if rho_ctrl >= 1.0 || rho_est >= 1.0 {
        return Err(Error::NotStabilizable(format!(
            "spectral radii: regulator {rho_ctrl:.6}, estimator {rho_est:.6}"
        )));
    }
    let ak = a + b * &k - &lp * c;
    StateSpaceController::new(ak, lp, k)
}

/// Closed-loop matrix of plant + strictly proper controller on the state
/// `[x; zeta]`, together with the injection matrix of the measurement error.
pub fn closed_loop_matrices(sys: &LtiSystem, ctrl: &StateSpaceController) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = sys.n();
    let nz = ctrl.order();
    let l = sys.l();
    let mut acl = DMatrix::zeros(n + nz, n + nz);
    acl.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    acl.view_mut((0, n), (n, nz)).copy_from(&(&sys.b * &ctrl.ck));
    acl.view_mut((n, 0), (nz, n)).copy_from(&(&ctrl.bk * &sys.c));
    acl.view_mut((n, n), (nz, nz)).copy_from(&ctrl.ak);
    let mut be = DMatrix::zeros(n + nz, l);
    be.view_mut((n, 0), (nz, l)).copy_from(&ctrl.bk);
    (acl, be)
}
