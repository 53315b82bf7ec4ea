//! Fixtures shared by the benchmarks.

use skelcon_core::encoder::{init_params, EncoderParams, EncoderShape};
use skelcon_core::{RngStream, SkeletonSequence};

/// Random sequence with one actor.
pub fn sequence(frames: usize, joints: usize, seed: u64) -> SkeletonSequence {
    let mut rng = RngStream::new(seed);
    let coords = (0..frames * joints * 3)
        .map(|_| rng.normal() * 0.3)
        .collect();
    SkeletonSequence::from_flat(frames, 1, joints, coords).expect("valid fixture")
}

pub fn batch(count: usize, frames: usize, joints: usize, seed: u64) -> Vec<SkeletonSequence> {
    (0..count as u64)
        .map(|i| sequence(frames, joints, seed + i))
        .collect()
}

pub fn encoder(joints: usize, hidden: usize, layers: usize, seed: u64) -> EncoderParams {
    init_params(
        &EncoderShape::new(joints * 3, hidden, layers),
        &mut RngStream::new(seed),
    )
    .expect("valid shape")
}

pub fn unit_vectors(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = RngStream::new(seed);
    (0..count)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_requested_shapes() {
        let b = batch(3, 10, 15, 0);
        assert_eq!(b.len(), 3);
        assert_eq!(b[0].coords().len(), 10 * 15 * 3);
        let u = unit_vectors(4, 8, 1);
        assert!(u
            .iter()
            .all(|v| (v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12));
        assert_eq!(encoder(15, 16, 2, 0).output_dim(), 16);
    }
}
