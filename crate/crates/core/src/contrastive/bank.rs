use serde::{Deserialize, Serialize};

use super::queue::unit_gaussian;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// One representation slot per training sample, refreshed by per-sample momentum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryBank {
    momentum: f64,
    slots: Vec<Vec<f64>>,
}

impl MemoryBank {
    /// Random unit vectors for `size` samples.
    pub fn random(size: usize, dim: usize, momentum: f64, rng: &mut RngStream) -> Result<Self> {
        if size < 2 || dim == 0 {
            return Err(Error::Config(
                "memory bank needs >= 2 slots and dim >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!(
                "bank momentum {momentum} must lie in [0, 1)"
            )));
        }
        Ok(Self {
            momentum,
            slots: (0..size).map(|_| unit_gaussian(dim, rng)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn slot(&self, i: usize) -> &[f64] {
        &self.slots[i]
    }

    /// `count` distinct slot indices, none equal to `anchor`.
    pub fn sample_negatives(
        &self,
        anchor: usize,
        count: usize,
        rng: &mut RngStream,
    ) -> Result<Vec<usize>> {
        let n = self.slots.len();
        if anchor >= n {
            return Err(Error::IndexOutOfRange {
                index: anchor,
                len: n,
            });
        }
        if count > n - 1 {
            return Err(Error::Config(format!(
                "requested {count} negatives but only {} other slots exist",
                n - 1
            )));
        }
        Ok(rng
            .sample_indices(n - 1, count)
            .into_iter()
            .map(|i| if i >= anchor { i + 1 } else { i })
            .collect())
    }

    /// `slot <- m * slot + (1 - m) * fresh`.
    pub fn update(&mut self, index: usize, fresh: &[f64]) -> Result<()> {
        let slot = self
            .slots
            .get_mut(index)
            .ok_or(Error::IndexOutOfRange { index, len: 0 })?;
        if slot.len() != fresh.len() {
            return Err(Error::DimMismatch {
                expected: slot.len(),
                got: fresh.len(),
            });
        }
        let m = self.momentum;
        for (s, f) in slot.iter_mut().zip(fresh) {
            *s = m * *s + (1.0 - m) * f;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_momentum_replaces_slot() {
        let mut b = MemoryBank::random(4, 3, 0.0, &mut RngStream::new(1)).unwrap();
        b.update(2, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(b.slot(2), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn negatives_exclude_anchor() {
        let b = MemoryBank::random(10, 2, 0.5, &mut RngStream::new(1)).unwrap();
        let mut rng = RngStream::new(3);
        for anchor in 0..10 {
            let idx = b.sample_negatives(anchor, 9, &mut rng).unwrap();
            assert!(!idx.contains(&anchor));
            let mut s = idx.clone();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), 9);
        }
        assert!(b.sample_negatives(0, 10, &mut rng).is_err());
    }
}
