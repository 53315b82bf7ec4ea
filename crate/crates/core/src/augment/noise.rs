use crate::rng::RngStream;
use crate::skeleton::SkeletonSequence;

pub const NOISE_STD: f64 = 0.05;

/// Adds i.i.d. `N(0, 0.05^2)` to every coordinate of the valid frames.
pub fn gaussian_noise(seq: &SkeletonSequence, rng: &mut RngStream) -> SkeletonSequence {
    let mut out = seq.clone();
    for v in out.valid_coords_mut() {
        *v += NOISE_STD * rng.normal();
    }
    out
}
