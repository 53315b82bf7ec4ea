use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Bounded FIFO of key vectors. The whole content serves as the negative set
/// for the next mini-batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyQueue {
    capacity: usize,
    dim: usize,
    keys: VecDeque<Vec<f64>>,
}

pub(crate) fn unit_gaussian(dim: usize, rng: &mut RngStream) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / n).collect()
}

impl KeyQueue {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return Err(Error::Config(
                "queue capacity and key dimension must be >= 1".into(),
            ));
        }
        Ok(Self {
            capacity,
            dim,
            keys: VecDeque::with_capacity(capacity),
        })
    }

    /// Full queue of unit-normalized Gaussian keys.
    pub fn random(capacity: usize, dim: usize, rng: &mut RngStream) -> Result<Self> {
        let mut q = Self::new(capacity, dim)?;
        for _ in 0..capacity {
            q.keys.push_back(unit_gaussian(dim, rng));
        }
        Ok(q)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.keys.len() == self.capacity
    }

    /// Appends a mini-batch of keys and evicts the oldest entries beyond capacity.
    pub fn enqueue(&mut self, batch: &[Vec<f64>]) -> Result<()> {
        if batch.len() > self.capacity {
            return Err(Error::Config(format!(
                "batch of {} keys exceeds queue capacity {}",
                batch.len(),
                self.capacity
            )));
        }
        if let Some(k) = batch.iter().find(|k| k.len() != self.dim) {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: k.len(),
            });
        }
        for k in batch {
            self.keys.push_back(k.clone());
        }
        while self.keys.len() > self.capacity {
            self.keys.pop_front();
        }
        Ok(())
    }

    /// All stored keys, oldest first.
    pub fn current_negatives(&self) -> Vec<&[f64]> {
        self.keys.iter().map(Vec::as_slice).collect()
    }
}
