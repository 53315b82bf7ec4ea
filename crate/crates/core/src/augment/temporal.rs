//! Time-axis strategies: reversal and Gaussian blur.

use crate::rng::RngStream;
use crate::skeleton::SkeletonSequence;

pub const BLUR_TAPS: usize = 15;
pub const BLUR_HALF: usize = BLUR_TAPS / 2;
pub const SIGMA_MIN: f64 = 0.1;
pub const SIGMA_MAX: f64 = 2.0;

/// Reverses the valid frames; zero padding stays at the tail.
pub fn reverse_frames(seq: &SkeletonSequence) -> SkeletonSequence {
    let mut out = seq.clone();
    let n = seq.valid_frames();
    for t in 0..n {
        out.frame_mut(t).copy_from_slice(seq.frame(n - 1 - t));
    }
    out
}

/// Reverses with probability 0.5 (one draw). Returns whether it fired.
pub fn reverse(seq: &SkeletonSequence, rng: &mut RngStream) -> (SkeletonSequence, bool) {
    if rng.coin() {
        (reverse_frames(seq), true)
    } else {
        (seq.clone(), false)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlurKernel {
    pub sigma: f64,
    /// Unnormalized `exp(-t^2 / (2 sigma^2))` for `t = -7..=7`.
    pub raw: [f64; BLUR_TAPS],
    pub weights: [f64; BLUR_TAPS],
}

impl BlurKernel {
    pub fn new(sigma: f64) -> Self {
        let mut raw = [0.0; BLUR_TAPS];
        for (i, w) in raw.iter_mut().enumerate() {
            let t = i as f64 - BLUR_HALF as f64;
            *w = (-(t * t) / (2.0 * sigma * sigma)).exp();
        }
        let sum: f64 = raw.iter().sum();
        let mut weights = raw;
        for w in &mut weights {
            *w /= sum;
        }
        Self {
            sigma,
            raw,
            weights,
        }
    }
}

/// Convolves every coordinate channel along time inside the valid window,
/// replicating the edge frames.
pub fn apply_blur(seq: &SkeletonSequence, kernel: &BlurKernel) -> SkeletonSequence {
    let n = seq.valid_frames();
    if n == 0 {
        return seq.clone();
    }
    let d = seq.frame_dim();
    let mut out = seq.clone();
    let src = seq.coords();
    let dst = out.coords_mut();
    for t in 0..n {
        for c in 0..d {
            let mut acc = 0.0;
            for (i, w) in kernel.weights.iter().enumerate() {
                let s = (t as isize + i as isize - BLUR_HALF as isize).clamp(0, n as isize - 1)
                    as usize;
                acc += w * src[s * d + c];
            }
            dst[t * d + c] = acc;
        }
    }
    out
}

/// With probability 0.5 (one draw) blurs with `sigma ~ U[0.1, 2.0]` (one more draw).
pub fn gaussian_blur(
    seq: &SkeletonSequence,
    rng: &mut RngStream,
) -> (SkeletonSequence, Option<f64>) {
    if rng.coin() {
        let sigma = rng.uniform_in(SIGMA_MIN, SIGMA_MAX);
        (apply_blur(seq, &BlurKernel::new(sigma)), Some(sigma))
    } else {
        (seq.clone(), None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(frames: usize) -> SkeletonSequence {
        SkeletonSequence::from_flat(frames, 1, 1, (0..frames * 3).map(|i| i as f64).collect())
            .unwrap()
    }

    #[test]
    fn reverse_three_frames() {
        let s = ramp(3);
        let r = reverse_frames(&s);
        assert_eq!(r.frame(0), s.frame(2));
        assert_eq!(r.frame(2), s.frame(0));
        assert_eq!(reverse_frames(&r), s);
    }

    #[test]
    fn kernel_shape() {
        for &sigma in &[0.1, 0.5, 1.3, 2.0] {
            let k = BlurKernel::new(sigma);
            assert_eq!(k.raw[BLUR_HALF], 1.0);
            for i in 0..BLUR_TAPS {
                assert_eq!(k.raw[i], k.raw[BLUR_TAPS - 1 - i]);
            }
            assert!((k.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_keeps_constants() {
        let s = SkeletonSequence::from_flat(20, 1, 2, vec![0.625; 120]).unwrap();
        let out = apply_blur(&s, &BlurKernel::new(1.7));
        for (a, b) in out.coords().iter().zip(s.coords()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn narrow_blur_is_near_identity() {
        let s = ramp(30);
        let out = apply_blur(&s, &BlurKernel::new(0.1));
        let max = out
            .coords()
            .iter()
            .zip(s.coords())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max < 1e-9, "{max}");
    }
}
