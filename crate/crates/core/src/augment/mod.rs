//! Skeleton augmentation strategies and ordered pipelines.
//!
//! Strategies run on center-normalized sequences. Each consumes a fixed,
//! documented number of draws from the stream it is given, so any pipeline
//! realization can be replayed from its seed:
//!
//! | strategy       | draws                                              |
//! |----------------|----------------------------------------------------|
//! | rotation       | axis, then X/Y/Z angles                            |
//! | shear          | six factors, row-major off-diagonal order          |
//! | reverse        | one coin                                           |
//! | gaussian noise | one normal per valid coordinate                    |
//! | gaussian blur  | one coin, then sigma if the coin fired             |
//! | joint mask     | V, L, then the joint and frame index sets          |
//! | channel mask   | axis                                               |

mod masking;
mod noise;
mod spatial;
mod temporal;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::skeleton::SkeletonSequence;

pub use masking::{
    apply_channel_mask, apply_joint_mask, channel_mask, joint_mask, sample_joint_mask,
    JointMaskSample, MASK_FRAMES, MASK_JOINTS,
};
pub use noise::{gaussian_noise, NOISE_STD};
pub use spatial::{
    apply_matrix, apply_rotation, apply_shear, det, mat_mul, mat_vec, rot_x, rot_y, rot_z,
    sample_rotation, sample_shear, transpose, Axis, Mat3, RotationSample, ShearSample, IDENTITY,
    MAIN_ANGLE_MAX, MINOR_ANGLE_MAX,
};
pub use temporal::{
    apply_blur, gaussian_blur, reverse, reverse_frames, BlurKernel, BLUR_TAPS, SIGMA_MAX, SIGMA_MIN,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Rotation,
    Shear,
    Reverse,
    GaussianNoise,
    GaussianBlur,
    JointMask,
    ChannelMask,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Rotation,
        Strategy::Shear,
        Strategy::Reverse,
        Strategy::GaussianNoise,
        Strategy::GaussianBlur,
        Strategy::JointMask,
        Strategy::ChannelMask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Rotation => "rotation",
            Strategy::Shear => "shear",
            Strategy::Reverse => "reverse",
            Strategy::GaussianNoise => "gaussian_noise",
            Strategy::GaussianBlur => "gaussian_blur",
            Strategy::JointMask => "joint_mask",
            Strategy::ChannelMask => "channel_mask",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        Ok(match s.as_str() {
            "rotation" | "rotate" | "rot" => Strategy::Rotation,
            "shear" => Strategy::Shear,
            "reverse" | "rev" => Strategy::Reverse,
            "gaussian_noise" | "noise" | "gn" => Strategy::GaussianNoise,
            "gaussian_blur" | "blur" | "gb" => Strategy::GaussianBlur,
            "joint_mask" | "jm" => Strategy::JointMask,
            "channel_mask" | "cm" => Strategy::ChannelMask,
            _ => {
                return Err(Error::Config(format!(
                    "unknown augmentation strategy '{s}'"
                )))
            }
        })
    }
}

/// What a strategy sampled on one application.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum AugRecord {
    Rotation {
        main_axis: Axis,
        angles: [f64; 3],
    },
    Shear {
        factors: [f64; 6],
    },
    Reverse {
        applied: bool,
    },
    GaussianNoise {
        std: f64,
    },
    GaussianBlur {
        sigma: Option<f64>,
    },
    JointMask {
        joints: Vec<usize>,
        frames: Vec<usize>,
    },
    ChannelMask {
        axis: Axis,
    },
}

pub fn apply_strategy(
    strategy: Strategy,
    seq: &SkeletonSequence,
    rng: &mut RngStream,
) -> (SkeletonSequence, AugRecord) {
    match strategy {
        Strategy::Rotation => {
            let r = sample_rotation(rng);
            (
                apply_rotation(seq, &r),
                AugRecord::Rotation {
                    main_axis: r.main_axis,
                    angles: r.angles,
                },
            )
        }
        Strategy::Shear => {
            let s = sample_shear(rng);
            (
                apply_shear(seq, &s),
                AugRecord::Shear { factors: s.factors },
            )
        }
        Strategy::Reverse => {
            let (out, applied) = reverse(seq, rng);
            (out, AugRecord::Reverse { applied })
        }
        Strategy::GaussianNoise => (
            gaussian_noise(seq, rng),
            AugRecord::GaussianNoise { std: NOISE_STD },
        ),
        Strategy::GaussianBlur => {
            let (out, sigma) = gaussian_blur(seq, rng);
            (out, AugRecord::GaussianBlur { sigma })
        }
        Strategy::JointMask => {
            let (out, m) = joint_mask(seq, rng);
            (
                out,
                AugRecord::JointMask {
                    joints: m.joints,
                    frames: m.frames,
                },
            )
        }
        Strategy::ChannelMask => {
            let (out, axis) = channel_mask(seq, rng);
            (out, AugRecord::ChannelMask { axis })
        }
    }
}

/// Ordered composition of strategies. Empty means identity.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AugmentationPipeline {
    strategies: Vec<Strategy>,
}

impl AugmentationPipeline {
    pub fn new(strategies: Vec<Strategy>) -> Result<Self> {
        if strategies.is_empty() {
            return Err(Error::Config(
                "augmentation pipeline is empty; use AugmentationPipeline::identity()".into(),
            ));
        }
        Ok(Self { strategies })
    }

    pub fn identity() -> Self {
        Self {
            strategies: Vec::new(),
        }
    }

    /// Reverse followed by shear.
    pub fn default_pair() -> Self {
        Self {
            strategies: vec![Strategy::Reverse, Strategy::Shear],
        }
    }

    pub fn strategies(&self) -> &[Strategy] {
        &self.strategies
    }

    pub fn is_identity(&self) -> bool {
        self.strategies.is_empty()
    }

    pub fn apply(&self, seq: &SkeletonSequence, rng: &mut RngStream) -> SkeletonSequence {
        self.apply_logged(seq, rng).0
    }

    pub fn apply_logged(
        &self,
        seq: &SkeletonSequence,
        rng: &mut RngStream,
    ) -> (SkeletonSequence, Vec<AugRecord>) {
        let mut cur = seq.clone();
        let mut log = Vec::with_capacity(self.strategies.len());
        for &s in &self.strategies {
            let (next, rec) = apply_strategy(s, &cur, rng);
            cur = next;
            log.push(rec);
        }
        (cur, log)
    }
}

impl fmt::Display for AugmentationPipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.strategies.is_empty() {
            return f.write_str("identity");
        }
        let names: Vec<&str> = self.strategies.iter().map(|s| s.name()).collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for AugmentationPipeline {
    type Err = Error;

    /// Comma-separated strategy names; `identity`, `none` or an empty string give the identity.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.is_empty() || t.eq_ignore_ascii_case("identity") || t.eq_ignore_ascii_case("none") {
            return Ok(Self::identity());
        }
        let strategies = t.split(',').map(str::parse).collect::<Result<Vec<_>>>()?;
        Self::new(strategies)
    }
}

/// Two independent realizations of `pipeline` on `seq`: (query view, key view).
pub fn augment_pair(
    seq: &SkeletonSequence,
    pipeline: &AugmentationPipeline,
    rng: &RngStream,
) -> (SkeletonSequence, SkeletonSequence) {
    let q = pipeline.apply(seq, &mut rng.split(0));
    let k = pipeline.apply(seq, &mut rng.split(1));
    (q, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq() -> SkeletonSequence {
        SkeletonSequence::from_flat(
            6,
            1,
            4,
            (0..72).map(|i| ((i * 7) % 11) as f64 * 0.1 - 0.5).collect(),
        )
        .unwrap()
    }

    #[test]
    fn parse_pipeline() {
        let p: AugmentationPipeline = "reverse, shear".parse().unwrap();
        assert_eq!(p, AugmentationPipeline::default_pair());
        assert!("identity"
            .parse::<AugmentationPipeline>()
            .unwrap()
            .is_identity());
        assert!("reverse,warp".parse::<AugmentationPipeline>().is_err());
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
    }

    #[test]
    fn identity_pair_returns_input() {
        let s = seq();
        let (a, b) = augment_pair(&s, &AugmentationPipeline::identity(), &RngStream::new(1));
        assert_eq!(a, s);
        assert_eq!(b, s);
    }

    #[test]
    fn pair_views_differ_and_replay() {
        let s = seq();
        let p = AugmentationPipeline::new(vec![Strategy::Rotation]).unwrap();
        let rng = RngStream::new(5);
        let (a, b) = augment_pair(&s, &p, &rng);
        assert_ne!(a, b);
        let (a2, b2) = augment_pair(&s, &p, &rng);
        assert_eq!((a, b), (a2, b2));
    }

    #[test]
    fn every_strategy_keeps_shape_and_finiteness() {
        let s = seq();
        let mut rng = RngStream::new(12);
        for st in Strategy::ALL {
            let (out, _) = apply_strategy(st, &s, &mut rng);
            assert_eq!(out.coords().len(), s.coords().len());
            assert!(out.coords().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn empty_pipeline_rejected_by_new() {
        assert!(AugmentationPipeline::new(vec![]).is_err());
    }
}
