//! Zero masks over joints-by-frames and over a coordinate axis.

use serde::{Deserialize, Serialize};

use super::spatial::Axis;
use crate::rng::RngStream;
use crate::skeleton::SkeletonSequence;

pub const MASK_JOINTS: (usize, usize) = (5, 15);
pub const MASK_FRAMES: (usize, usize) = (50, 100);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointMaskSample {
    pub joints: Vec<usize>,
    pub frames: Vec<usize>,
}

/// Draws V in 5..=15 and L in 50..=100, clamps them to `J - 1` and the valid
/// frame count, then picks that many distinct joints and frames.
pub fn sample_joint_mask(seq: &SkeletonSequence, rng: &mut RngStream) -> JointMaskSample {
    let v = rng.int_in(MASK_JOINTS.0, MASK_JOINTS.1);
    let l = rng.int_in(MASK_FRAMES.0, MASK_FRAMES.1);
    let v = v.min(seq.joints().saturating_sub(1));
    let l = l.min(seq.valid_frames());
    let mut joints = rng.sample_indices(seq.joints(), v);
    let mut frames = rng.sample_indices(seq.valid_frames(), l);
    joints.sort_unstable();
    frames.sort_unstable();
    JointMaskSample { joints, frames }
}

pub fn apply_joint_mask(seq: &SkeletonSequence, mask: &JointMaskSample) -> SkeletonSequence {
    let mut out = seq.clone();
    for &t in &mask.frames {
        for a in 0..seq.actors() {
            for &j in &mask.joints {
                out.set_point(t, a, j, [0.0; 3]);
            }
        }
    }
    out
}

pub fn joint_mask(
    seq: &SkeletonSequence,
    rng: &mut RngStream,
) -> (SkeletonSequence, JointMaskSample) {
    let mask = sample_joint_mask(seq, rng);
    (apply_joint_mask(seq, &mask), mask)
}

pub fn apply_channel_mask(seq: &SkeletonSequence, axis: Axis) -> SkeletonSequence {
    let mut out = seq.clone();
    let k = axis.index();
    for p in out.coords_mut().chunks_exact_mut(3) {
        p[k] = 0.0;
    }
    out
}

pub fn channel_mask(seq: &SkeletonSequence, rng: &mut RngStream) -> (SkeletonSequence, Axis) {
    let axis = Axis::ALL[rng.below(3)];
    (apply_channel_mask(seq, axis), axis)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(frames: usize, actors: usize, joints: usize) -> SkeletonSequence {
        let n = frames * actors * joints * 3;
        SkeletonSequence::from_flat(
            frames,
            actors,
            joints,
            (0..n).map(|i| 1.0 + i as f64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn joint_mask_zeroes_exactly_the_product() {
        let s = dense(120, 2, 25);
        let mut rng = RngStream::new(4);
        for _ in 0..20 {
            let (out, mask) = joint_mask(&s, &mut rng);
            assert!((5..=15).contains(&mask.joints.len()));
            assert!((50..=100).contains(&mask.frames.len()));
            let mut zeroed = 0;
            for t in 0..s.frames() {
                for a in 0..2 {
                    for j in 0..25 {
                        let hit = mask.frames.contains(&t) && mask.joints.contains(&j);
                        if hit {
                            assert_eq!(out.point(t, a, j), [0.0; 3]);
                            zeroed += 1;
                        } else {
                            assert_eq!(out.point(t, a, j), s.point(t, a, j));
                        }
                    }
                }
            }
            assert_eq!(zeroed, mask.joints.len() * mask.frames.len() * 2);
        }
    }

    #[test]
    fn joint_mask_clamps_small_inputs() {
        let s = dense(10, 1, 4);
        let mut rng = RngStream::new(1);
        let mask = sample_joint_mask(&s, &mut rng);
        assert_eq!(mask.joints.len(), 3);
        assert_eq!(mask.frames.len(), 10);
    }

    #[test]
    fn channel_mask_axis_z() {
        let s = dense(3, 1, 2);
        let out = apply_channel_mask(&s, Axis::Z);
        for (p, q) in out.coords().chunks(3).zip(s.coords().chunks(3)) {
            assert_eq!(p[2], 0.0);
            assert_eq!(&p[..2], &q[..2]);
        }
        assert_eq!(apply_channel_mask(&out, Axis::Z), out);
    }
}
