//! Waypoint tracking as disturbance rejection.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lti::{LtiSystem, Signal};

/// Augmented plant on the state `[xi - r; r]` driven by `w_k = r_{k+1} - r_k`
/// for a full-state reference `r`:
///
/// ```text
/// A' = [A  A - I; 0  I],  B' = [B; 0],  C' = [C  0],  H' = [-I; I]
/// ```
///
/// `C'` reports the reference-subtracted measurement `C (xi - r)`.
pub fn augment_for_tracking(sys: &LtiSystem) -> Result<LtiSystem> {
    let n = sys.n();
    let m = sys.m();
    let l = sys.l();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    a.view_mut((0, n), (n, n)).copy_from(&(&sys.a - &eye));
    a.view_mut((n, n), (n, n)).copy_from(&eye);
    let mut b = DMatrix::zeros(2 * n, m);
    b.view_mut((0, 0), (n, m)).copy_from(&sys.b);
    let mut c = DMatrix::zeros(l, 2 * n);
    c.view_mut((0, 0), (l, n)).copy_from(&sys.c);
    let mut h = DMatrix::zeros(2 * n, n);
    h.view_mut((0, 0), (n, n)).copy_from(&(-&eye));
    h.view_mut((n, 0), (n, n)).copy_from(&eye);
    LtiSystem::new(a, b, c, h, sys.dt)
}

/// Embedding of measured coordinates as equilibrium states, `E = C'`.
/// For plants whose measured coordinates are positions of integrator chains,
/// `A E = E`: a parked reference stays put.
pub fn position_embedding(sys: &LtiSystem) -> DMatrix<f64> {
    sys.c.transpose()
}

/// Tracking-error subsystem for references `xi_ref = E r` with `r` in
/// measurement coordinates: `x = xi - E r` obeys `x+ = A x + B u - E w`,
/// `w_k = r_{k+1} - r_k`, so it is the plant with `H = -E`.
pub fn tracking_error_system(sys: &LtiSystem, embedding: &DMatrix<f64>) -> Result<LtiSystem> {
    if embedding.nrows() != sys.n() {
        return Err(Error::Dimension("embedding rows must equal the state dimension".into()));
    }
    let drift = (&sys.a * embedding - embedding).amax();
    if drift > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "embedded references are not equilibria (max |A E - E| = {drift:.3e})"
        )));
    }
    sys.clone().with_h(-embedding)
}

/// `w_k = r_{k+1} - r_k`; one sample shorter than the reference.
pub fn reference_increments(reference: &[DVector<f64>]) -> Result<Signal> {
    Signal::new(reference.windows(2).map(|p| &p[1] - &p[0]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::double_integrator;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_axis_block_structure() {
        let sys = double_integrator(0.1, 1).unwrap();
        let aug = augment_for_tracking(&sys).unwrap();
        assert_eq!((aug.n(), aug.m(), aug.l(), aug.nw()), (4, 1, 1, 2));
        let a = &aug.a;
        assert_eq!(a.view((0, 0), (2, 2)), sys.a);
        assert_eq!(a.view((2, 2), (2, 2)), DMatrix::<f64>::identity(2, 2));
        assert_eq!(a.view((2, 0), (2, 2)), DMatrix::<f64>::zeros(2, 2));
        assert_eq!(aug.b.view((2, 0), (2, 1)), DMatrix::<f64>::zeros(2, 1));
        assert_eq!(aug.c.view((0, 2), (1, 2)), DMatrix::<f64>::zeros(1, 2));
    }

    #[test]
    fn identity_measurement_gives_left_block() {
        let sys = double_integrator(0.1, 1).unwrap().with_c(DMatrix::identity(2, 2)).unwrap();
        let aug = augment_for_tracking(&sys).unwrap();
        let mut expect = DMatrix::zeros(2, 4);
        expect.view_mut((0, 0), (2, 2)).fill_with_identity();
        assert_eq!(aug.c, expect);
    }

    #[test]
    fn augmented_rollout_matches_bookkeeping() {
        let sys = double_integrator(0.1, 2).unwrap();
        let aug = augment_for_tracking(&sys).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = sys.n();
        let refs: Vec<DVector<f64>> = (0..60).map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))).collect();
        let mut xi = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let mut z = DVector::zeros(2 * n);
        z.rows_mut(0, n).copy_from(&(&xi - &refs[0]));
        z.rows_mut(n, n).copy_from(&refs[0]);
        for k in 0..59 {
            let u = DVector::from_fn(sys.m(), |_, _| rng.gen_range(-1.0..1.0));
            let w = &refs[k + 1] - &refs[k];
            xi = &sys.a * &xi + &sys.b * &u;
            z = &aug.a * &z + &aug.b * &u + &aug.h * &w;
            let err = (z.rows(0, n) - (&xi - &refs[k + 1])).amax().max((z.rows(n, n) - &refs[k + 1]).amax());
            assert!(err < 1e-12, "step {k}: {err}");
            assert!((&aug.c * &z - &sys.c * (&xi - &refs[k + 1])).amax() < 1e-12);
        }
    }

    #[test]
    fn error_subsystem_requires_equilibrium_embedding() {
        let sys = double_integrator(0.1, 2).unwrap();
        let e = position_embedding(&sys);
        let err_sys = tracking_error_system(&sys, &e).unwrap();
        assert_eq!(err_sys.h, -e);
        let mut bad = DMatrix::zeros(4, 1);
        bad[(1, 0)] = 1.0; // a velocity offset drifts
        assert!(tracking_error_system(&sys, &bad).is_err());
    }

    #[test]
    fn increments_are_differences() {
        let r = vec![DVector::from_vec(vec![0.0]), DVector::from_vec(vec![0.5]), DVector::from_vec(vec![0.2])];
        let w = reference_increments(&r).unwrap();
        assert_eq!(w.len(), 2);
        assert!((w.get(1)[0] + 0.3).abs() < 1e-15);
    }
}
