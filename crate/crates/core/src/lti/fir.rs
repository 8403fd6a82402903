use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::signal::Signal;
use crate::error::{Error, Result};

/// Strictly proper FIR convolution operator with taps `F(1), ..., F(T)`:
/// `(F s)_k = sum_{t=1}^{min(k,T)} F(t) s_{k-t}`.
///
/// `taps[0]` holds `F(1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirOperator {
    #[serde(with = "crate::serde_mat::seq")]
    taps: Vec<DMatrix<f64>>,
}

impl FirOperator {
    pub fn new(taps: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = taps
            .first()
            .ok_or_else(|| Error::InvalidArgument("FIR operator needs at least one tap".into()))?;
        let shape = first.shape();
        if let Some(t) = taps.iter().position(|m| m.shape() != shape) {
            return Err(Error::Dimension(format!(
                "tap {} has shape {:?}, expected {:?}",
                t + 1,
                taps[t].shape(),
                shape
            )));
        }
        Ok(Self { taps })
    }

    pub fn zeros(rows: usize, cols: usize, horizon: usize) -> Self {
        Self { taps: vec![DMatrix::zeros(rows, cols); horizon.max(1)] }
    }

    pub fn horizon(&self) -> usize {
        self.taps.len()
    }

    /// `(rows, cols)` of every tap.
    pub fn shape(&self) -> (usize, usize) {
        self.taps[0].shape()
    }

    pub fn taps(&self) -> &[DMatrix<f64>] {
        &self.taps
    }

    /// Tap `F(t)` for `t >= 1`; zero past the horizon.
    pub fn tap(&self, t: usize) -> DMatrix<f64> {
        assert!(t >= 1, "FIR taps are indexed from 1");
        self.taps
            .get(t - 1)
            .cloned()
            .unwrap_or_else(|| DMatrix::zeros(self.shape().0, self.shape().1))
    }

    pub fn into_taps(self) -> Vec<DMatrix<f64>> {
        self.taps
    }

    /// Induced l_inf -> l_inf norm: max over output rows of the absolute
    /// entry sum across all taps.
    pub fn l1_norm(&self) -> f64 {
        let (rows, _) = self.shape();
        (0..rows)
            .map(|i| {
                self.taps
                    .iter()
                    .map(|f| f.row(i).iter().map(|x| x.abs()).sum::<f64>())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Squared H2 norm, `sum_t trace(F(t)^T F(t))`.
    pub fn frobenius_cost(&self) -> f64 {
        self.taps.iter().map(|f| f.norm_squared()).sum()
    }

    /// Sum of all taps (the transfer function at z = 1).
    pub fn dc_gain(&self) -> DMatrix<f64> {
        let (r, c) = self.shape();
        self.taps.iter().fold(DMatrix::zeros(r, c), |acc, f| acc + f)
    }

    /// Output has the same length as the input.
    pub fn convolve(&self, s: &Signal) -> Result<Signal> {
        let (rows, cols) = self.shape();
        if !s.is_empty() && s.dim() != cols {
            return Err(Error::Dimension(format!(
                "operator takes {cols}-vectors, signal has dimension {}",
                s.dim()
            )));
        }
        let out = (0..s.len())
            .map(|k| {
                let mut y = DVector::zeros(rows);
                for t in 1..=k.min(self.horizon()) {
                    y += &self.taps[t - 1] * s.get(k - t);
                }
                y
            })
            .collect();
        Signal::new(out)
    }

    /// Series composition `self ∘ other` (apply `other` first). Both are
    /// strictly proper so the product starts at tap 2; tap 1 is zero.
    pub fn compose(&self, other: &FirOperator) -> Result<FirOperator> {
        let (r, inner) = self.shape();
        let (inner2, c) = other.shape();
        if inner != inner2 {
            return Err(Error::Dimension(format!(
                "cannot compose {r}x{inner} after {inner2}x{c}"
            )));
        }
        let horizon = self.horizon() + other.horizon();
        let mut taps = vec![DMatrix::zeros(r, c); horizon];
        for (i, f) in self.taps.iter().enumerate() {
            for (j, g) in other.taps.iter().enumerate() {
                // F(i+1) G(j+1) lands on tap i+j+2.
                taps[i + j + 1] += f * g;
            }
        }
        Ok(FirOperator { taps })
    }

    pub fn map_taps(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Result<FirOperator> {
        FirOperator::new(self.taps.iter().map(f).collect())
    }

    /// `M F(t)` for every tap.
    pub fn left_mul(&self, m: &DMatrix<f64>) -> Result<FirOperator> {
        if m.ncols() != self.shape().0 {
            return Err(Error::Dimension("left factor does not conform".into()));
        }
        self.map_taps(|f| m * f)
    }

    /// `F(t) M` for every tap.
    pub fn right_mul(&self, m: &DMatrix<f64>) -> Result<FirOperator> {
        if m.nrows() != self.shape().1 {
            return Err(Error::Dimension("right factor does not conform".into()));
        }
        self.map_taps(|f| f * m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fir(rng: &mut ChaCha8Rng, rows: usize, cols: usize, t: usize) -> FirOperator {
        FirOperator::new(
            (0..t)
                .map(|_| DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap()
    }

    /// max over sign patterns of ||sum_t F(t) sigma_t||_inf
    fn sign_enumeration_norm(f: &FirOperator) -> f64 {
        let (_, q) = f.shape();
        let bits = f.horizon() * q;
        let mut best = 0.0f64;
        for mask in 0u64..(1u64 << bits) {
            let mut acc = DVector::zeros(f.shape().0);
            for (t, tap) in f.taps().iter().enumerate() {
                let sigma = DVector::from_fn(q, |j, _| {
                    if mask >> (t * q + j) & 1 == 1 {
                        1.0
                    } else {
                        -1.0
                    }
                });
                acc += tap * sigma;
            }
            best = best.max(acc.amax());
        }
        best
    }

    #[test]
    fn identity_tap_norm() {
        let f = FirOperator::new(vec![DMatrix::identity(2, 2)]).unwrap();
        assert_eq!(f.l1_norm(), 1.0);
        assert_eq!(f.frobenius_cost(), 2.0);
    }

    #[test]
    fn row_sum_example() {
        let f = FirOperator::new(vec![
            DMatrix::from_row_slice(1, 2, &[1.0, -2.0]),
            DMatrix::from_row_slice(1, 2, &[0.5, 0.0]),
        ])
        .unwrap();
        assert_eq!(f.l1_norm(), 3.5);
    }

    #[test]
    fn zero_taps_cost() {
        assert_eq!(FirOperator::zeros(3, 2, 4).frobenius_cost(), 0.0);
    }

    #[test]
    fn ragged_taps_rejected() {
        assert!(FirOperator::new(vec![DMatrix::zeros(2, 2), DMatrix::zeros(2, 3)]).is_err());
        assert!(FirOperator::new(vec![]).is_err());
    }

    #[test]
    fn norm_matches_sign_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let t = rng.gen_range(1..=6);
            let q = rng.gen_range(1..=3);
            let q = if t * q > 12 { 12 / t } else { q };
            let p = rng.gen_range(1..=3);
            let f = random_fir(&mut rng, p, q.max(1), t);
            let brute = sign_enumeration_norm(&f);
            assert!((brute - f.l1_norm()).abs() <= 1e-12 * brute.max(1.0));
        }
    }

    #[test]
    fn frobenius_is_sum_of_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_fir(&mut rng, 3, 2, 5);
        let mut direct = 0.0;
        for tap in f.taps() {
            for x in tap.iter() {
                direct += x * x;
            }
        }
        assert!((direct - f.frobenius_cost()).abs() < 1e-12);
    }

    #[test]
    fn impulse_reproduces_taps_shifted() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = random_fir(&mut rng, 2, 3, 4);
        for axis in 0..3 {
            let y = f.convolve(&Signal::impulse(3, axis, 8)).unwrap();
            assert_eq!(y.get(0).amax(), 0.0);
            for k in 1..8 {
                let expect = f.tap(k).column(axis).into_owned();
                assert_eq!(y.get(k), &expect);
            }
        }
    }

    #[test]
    fn zero_signal_maps_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_fir(&mut rng, 2, 2, 3);
        let y = f.convolve(&Signal::zeros(2, 6)).unwrap();
        assert_eq!(y.linf_norm().unwrap(), 0.0);
        assert_eq!(y.len(), 6);
    }

    #[test]
    fn convolve_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_fir(&mut rng, 2, 3, 5);
        let s: Vec<DVector<f64>> = (0..12)
            .map(|_| DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let y = f.convolve(&Signal::new(s.clone()).unwrap()).unwrap();
        for k in 0..12 {
            for i in 0..2 {
                let mut acc = 0.0;
                for t in 1..=5usize {
                    if t > k {
                        continue;
                    }
                    for j in 0..3 {
                        acc += f.taps()[t - 1][(i, j)] * s[k - t][j];
                    }
                }
                assert!((acc - y.get(k)[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn convolve_dimension_mismatch() {
        let f = FirOperator::zeros(2, 3, 2);
        assert!(f.convolve(&Signal::zeros(2, 4)).is_err());
    }

    #[test]
    fn sign_witness_attains_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let f = random_fir(&mut rng, 2, 2, 3);
            // Witness: maximizing row i, input s_{K-t} = sign(F(t)_{i,:}).
            let (i_star, _) = (0..2)
                .map(|i| {
                    (i, f.taps().iter().map(|m| m.row(i).abs().sum()).sum::<f64>())
                })
                .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
            let horizon = f.horizon();
            let s: Vec<DVector<f64>> = (0..=horizon)
                .map(|k| {
                    let t = horizon - k;
                    if t == 0 {
                        return DVector::zeros(2);
                    }
                    f.tap(t).row(i_star).transpose().map(|x| if x >= 0.0 { 1.0 } else { -1.0 })
                })
                .collect();
            let y = f.convolve(&Signal::new(s).unwrap()).unwrap();
            assert!((y.linf_norm().unwrap() - f.l1_norm()).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn norm_bounds_peak_gain(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_fir(&mut rng, 2, 3, 4);
            let norm = f.l1_norm();
            for _ in 0..50 {
                let s: Vec<DVector<f64>> = (0..10)
                    .map(|_| DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0)))
                    .collect();
                let y = f.convolve(&Signal::new(s).unwrap()).unwrap();
                prop_assert!(y.linf_norm().unwrap() <= norm + 1e-12);
            }
        }

        #[test]
        fn submultiplicative(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_fir(&mut rng, 2, 3, 3);
            let g = random_fir(&mut rng, 3, 2, 4);
            let fg = f.compose(&g).unwrap();
            prop_assert!(fg.l1_norm() <= f.l1_norm() * g.l1_norm() + 1e-12);
        }
    }
}
