use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete-time plant
///
/// ```text
/// x_{k+1} = A x_k + B u_k + H w_k
/// y_k     = C x_k + e_k
/// ```
///
/// `dt` is carried as metadata; the model itself is already discretized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiSystem {
    #[serde(with = "crate::serde_mat")]
    pub a: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub b: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub c: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub h: DMatrix<f64>,
    pub dt: f64,
}

impl LtiSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        h: DMatrix<f64>,
        dt: f64,
    ) -> Result<Self> {
        let sys = Self { a, b, c, h, dt };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if self.a.ncols() != n {
            return Err(Error::Dimension(format!(
                "A must be square, got {}x{}",
                n,
                self.a.ncols()
            )));
        }
        if self.b.nrows() != n {
            return Err(Error::Dimension(format!("B has {} rows, A has {}", self.b.nrows(), n)));
        }
        if self.c.ncols() != n {
            return Err(Error::Dimension(format!("C has {} cols, A has {}", self.c.ncols(), n)));
        }
        if self.h.nrows() != n {
            return Err(Error::Dimension(format!("H has {} rows, A has {}", self.h.nrows(), n)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Measurement dimension.
    pub fn l(&self) -> usize {
        self.c.nrows()
    }

    /// Disturbance dimension.
    pub fn nw(&self) -> usize {
        self.h.ncols()
    }

    pub fn with_c(mut self, c: DMatrix<f64>) -> Result<Self> {
        self.c = c;
        self.validate()?;
        Ok(self)
    }

    pub fn with_h(mut self, h: DMatrix<f64>) -> Result<Self> {
        self.h = h;
        self.validate()?;
        Ok(self)
    }
}

/// Independent double integrators, one per axis, state ordered
/// `[p_1, v_1, p_2, v_2, ...]`. `C` extracts the positions and `H = I`.
pub fn double_integrator(dt: f64, axes: usize) -> Result<LtiSystem> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(1..=2).contains(&axes) {
        return Err(Error::InvalidArgument(format!("axes must be 1 or 2, got {axes}")));
    }
    let n = 2 * axes;
    let mut a = DMatrix::identity(n, n);
    let mut b = DMatrix::zeros(n, axes);
    let mut c = DMatrix::zeros(axes, n);
    for ax in 0..axes {
        a[(2 * ax, 2 * ax + 1)] = dt;
        b[(2 * ax + 1, ax)] = 1.0;
        c[(ax, 2 * ax)] = 1.0;
    }
    LtiSystem::new(a, b, c, DMatrix::identity(n, n), dt)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}
