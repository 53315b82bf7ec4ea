//! Generic access to parameter trees as ordered lists of flat tensors.
//!
//! Optimizers, momentum mirroring, checksums and finite-difference probes all
//! work through this view, so they apply uniformly to encoders, heads and
//! classifiers.

use crate::error::{Error, Result};

pub trait Params {
    /// Tensors in a fixed order.
    fn tensors(&self) -> Vec<&[f64]>;

    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    /// `true` for tensors that receive weight decay (weights, not biases).
    fn decay_mask(&self) -> Vec<bool>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn get_flat(&self, mut index: usize) -> f64 {
        for t in self.tensors() {
            if index < t.len() {
                return t[index];
            }
            index -= t.len();
        }
        panic!("flat parameter index out of range");
    }

    fn set_flat(&mut self, mut index: usize, value: f64) {
        for t in self.tensors_mut() {
            if index < t.len() {
                t[index] = value;
                return;
            }
            index -= t.len();
        }
        panic!("flat parameter index out of range");
    }

    fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }

    fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Order-sensitive FNV-1a over the bit patterns of every value.
    fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.tensors() {
            for v in t {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    fn sq_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum()
    }
}

pub fn same_layout<P: Params + ?Sized, Q: Params + ?Sized>(a: &P, b: &Q) -> Result<()> {
    let la: Vec<usize> = a.tensors().iter().map(|t| t.len()).collect();
    let lb: Vec<usize> = b.tensors().iter().map(|t| t.len()).collect();
    if la != lb {
        return Err(Error::Shape(format!(
            "parameter layouts differ: {la:?} vs {lb:?}"
        )));
    }
    Ok(())
}

/// `dst += src`, tensor by tensor.
pub fn add_assign<P: Params>(dst: &mut P, src: &P) {
    for (d, s) in dst.tensors_mut().into_iter().zip(src.tensors()) {
        for (a, b) in d.iter_mut().zip(s) {
            *a += b;
        }
    }
}

pub fn scale<P: Params>(p: &mut P, factor: f64) {
    for t in p.tensors_mut() {
        for v in t {
            *v *= factor;
        }
    }
}

/// Squared euclidean distance between two parameter trees of equal layout.
pub fn sq_distance<P: Params>(a: &P, b: &P) -> f64 {
    a.tensors()
        .iter()
        .zip(b.tensors())
        .flat_map(|(x, y)| x.iter().zip(y.iter()))
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}
