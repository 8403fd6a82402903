use nalgebra::DVector;

use crate::error::{Error, Result};

/// Finite vector-valued sequence indexed from k = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    dim: usize,
    samples: Vec<DVector<f64>>,
}

impl Signal {
    pub fn new(samples: Vec<DVector<f64>>) -> Result<Self> {
        let dim = samples.first().map_or(0, |s| s.len());
        if let Some(k) = samples.iter().position(|s| s.len() != dim) {
            return Err(Error::Dimension(format!(
                "sample {k} has dimension {}, expected {dim}",
                samples[k].len()
            )));
        }
        Ok(Self { dim, samples })
    }

    pub fn zeros(dim: usize, len: usize) -> Self {
        Self { dim, samples: vec![DVector::zeros(dim); len] }
    }

    /// Unit impulse in coordinate `axis` at k = 0.
    pub fn impulse(dim: usize, axis: usize, len: usize) -> Self {
        let mut s = Self::zeros(dim, len);
        if len > 0 {
            s.samples[0][axis] = 1.0;
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }

    pub fn get(&self, k: usize) -> &DVector<f64> {
        &self.samples[k]
    }

    /// `sup_k ||s_k||_inf`.
    pub fn linf_norm(&self) -> Result<f64> {
        if self.samples.is_empty() {
            return Err(Error::EmptySignal);
        }
        Ok(self
            .samples
            .iter()
            .map(|s| s.amax())
            .fold(0.0, f64::max))
    }
}

impl From<Signal> for Vec<DVector<f64>> {
    fn from(s: Signal) -> Self {
        s.samples
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_and_constant() {
        assert_eq!(Signal::zeros(3, 5).linf_norm().unwrap(), 0.0);
        let s = Signal::new(vec![DVector::from_vec(vec![1.0, -3.0])]).unwrap();
        assert_eq!(s.linf_norm().unwrap(), 3.0);
    }

    #[test]
    fn empty_is_error() {
        let s = Signal::new(vec![]).unwrap();
        assert!(matches!(s.linf_norm(), Err(Error::EmptySignal)));
    }

    #[test]
    fn ragged_rejected() {
        let r = Signal::new(vec![DVector::zeros(2), DVector::zeros(3)]);
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn matches_exhaustive_scan(data in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 1..20)) {
            let s = Signal::new(data.iter().map(|v| DVector::from_vec(v.clone())).collect()).unwrap();
            let mut best = 0.0f64;
            for v in &data {
                for x in v {
                    if x.abs() > best {
                        best = x.abs();
                    }
                }
            }
            prop_assert_eq!(s.linf_norm().unwrap(), best);
        }
    }
}
