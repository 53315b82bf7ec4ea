use std::collections::VecDeque;

use proptest::prelude::*;
use skelcon_core::augment::{
    apply_blur, apply_channel_mask, apply_joint_mask, apply_rotation, apply_shear, reverse_frames,
    sample_joint_mask, sample_rotation, sample_shear, AugmentationPipeline, Axis, BlurKernel,
    RotationSample, ShearSample, Strategy,
};
use skelcon_core::contrastive::{info_nce, softmax_cross_entropy, KeyQueue};
use skelcon_core::dataset_io::{read_dataset, write_dataset, LoadOptions};
use skelcon_core::encoder::{init_params, EncoderCheckpoint, EncoderShape};
use skelcon_core::evaluation::metrics_from_scores;
use skelcon_core::skeleton::pad_to_shape;
use skelcon_core::{DataShape, LabeledDataset, RngStream, SkeletonSequence};

fn sequence(frames: usize, actors: usize, joints: usize, seed: u64) -> SkeletonSequence {
    let mut rng = RngStream::new(seed);
    let n = frames * actors * joints * 3;
    SkeletonSequence::from_flat(
        frames,
        actors,
        joints,
        (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect(),
    )
    .unwrap()
}

/// A sequence of `valid` frames zero-padded to `frames`.
fn padded(valid: usize, frames: usize, joints: usize, seed: u64) -> SkeletonSequence {
    let shape = DataShape::new(frames, 1, joints, 0, 2).unwrap();
    pad_to_shape(&sequence(valid, 1, joints, seed), &shape).unwrap()
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn tail_is_zero(s: &SkeletonSequence) -> bool {
    (s.valid_frames()..s.frames()).all(|t| s.frame(t).iter().all(|&v| v == 0.0))
}

fn strategy() -> impl proptest::strategy::Strategy<Value = Strategy> {
    prop::sample::select(vec![
        Strategy::Rotation,
        Strategy::Shear,
        Strategy::Reverse,
        Strategy::GaussianNoise,
        Strategy::GaussianBlur,
        Strategy::JointMask,
        Strategy::ChannelMask,
    ])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotation_preserves_pairwise_distances(seed in any::<u64>(), joints in 2usize..8) {
        let s = sequence(3, 1, joints, seed);
        let r = sample_rotation(&mut RngStream::new(seed ^ 1));
        let out = apply_rotation(&s, &r);
        for t in 0..3 {
            for a in 0..joints {
                for b in a + 1..joints {
                    let before = dist(s.point(t, 0, a), s.point(t, 0, b));
                    let after = dist(out.point(t, 0, a), out.point(t, 0, b));
                    prop_assert!((before - after).abs() <= 1e-9 * before.max(1e-12));
                }
            }
        }
    }

    #[test]
    fn rotation_matrix_is_proper(seed in any::<u64>()) {
        let r = sample_rotation(&mut RngStream::new(seed));
        let m = r.matrix;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-12);
            }
        }
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        prop_assert!((det - 1.0).abs() < 1e-12);
        for (i, &a) in r.angles.iter().enumerate() {
            let hi = if i == r.main_axis.index() { std::f64::consts::PI / 6.0 } else { std::f64::consts::PI / 180.0 };
            prop_assert!((0.0..=hi).contains(&a));
        }
    }

    #[test]
    fn shear_factors_bounded_and_unit_diagonal(seed in any::<u64>()) {
        let s = sample_shear(&mut RngStream::new(seed));
        prop_assert!(s.factors.iter().all(|f| (-1.0..=1.0).contains(f)));
        for i in 0..3 {
            prop_assert_eq!(s.matrix[i][i], 1.0);
        }
    }

    #[test]
    fn linear_maps_commute_with_scaling(seed in any::<u64>(), a in -3.0f64..3.0) {
        let s = sequence(4, 2, 3, seed);
        let scaled = s.map_points(|p| [a * p[0], a * p[1], a * p[2]]);
        let r = sample_rotation(&mut RngStream::new(seed ^ 2));
        let sh = sample_shear(&mut RngStream::new(seed ^ 3));
        for (x, y) in [
            (apply_rotation(&scaled, &r), apply_rotation(&s, &r)),
            (apply_shear(&scaled, &sh), apply_shear(&s, &sh)),
        ] {
            for (u, v) in x.coords().iter().zip(y.coords()) {
                prop_assert!((u - a * v).abs() <= 1e-12 * (1.0 + v.abs()));
            }
        }
    }

    #[test]
    fn reverse_is_an_involution(seed in any::<u64>(), valid in 1usize..9) {
        let s = padded(valid, 9, 3, seed);
        prop_assert_eq!(reverse_frames(&reverse_frames(&s)), s);
    }

    #[test]
    fn blur_kernel_invariants(sigma in 0.1f64..2.0) {
        let k = BlurKernel::new(sigma);
        prop_assert_eq!(k.raw.len(), 15);
        prop_assert_eq!(k.raw[7], 1.0);
        for i in 0..15 {
            prop_assert_eq!(k.raw[i], k.raw[14 - i]);
        }
        prop_assert!((k.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blur_keeps_constant_sequences(sigma in 0.1f64..2.0, c in -2.0f64..2.0, valid in 1usize..12) {
        let shape = DataShape::new(12, 1, 2, 0, 2).unwrap();
        let s = pad_to_shape(&SkeletonSequence::from_flat(valid, 1, 2, vec![c; valid * 6]).unwrap(), &shape).unwrap();
        let out = apply_blur(&s, &BlurKernel::new(sigma));
        for t in 0..valid {
            for &v in out.frame(t) {
                prop_assert!((v - c).abs() < 1e-12);
            }
        }
        prop_assert!(tail_is_zero(&out));
    }

    #[test]
    fn joint_mask_zeroes_exactly_the_chosen_entries(seed in any::<u64>(), joints in 2usize..20, valid in 1usize..30) {
        // offset away from zero so masked entries are unambiguous
        let base = sequence(valid, 1, joints, seed).map_points(|p| [p[0] + 5.0, p[1] + 5.0, p[2] + 5.0]);
        let s = pad_to_shape(&base, &DataShape::new(30, 1, joints, 0, 2).unwrap()).unwrap();
        let m = sample_joint_mask(&s, &mut RngStream::new(seed ^ 4));
        prop_assert!(m.joints.len() < joints && m.frames.len() <= valid);
        let out = apply_joint_mask(&s, &m);
        for t in 0..valid {
            for j in 0..joints {
                let masked = m.frames.contains(&t) && m.joints.contains(&j);
                let p = out.point(t, 0, j);
                if masked {
                    prop_assert_eq!(p, [0.0; 3]);
                } else {
                    prop_assert_eq!(p, s.point(t, 0, j));
                }
            }
        }
    }

    #[test]
    fn channel_mask_zeroes_one_axis(seed in any::<u64>(), axis in prop::sample::select(vec![Axis::X, Axis::Y, Axis::Z])) {
        let s = sequence(5, 2, 4, seed);
        let out = apply_channel_mask(&s, axis);
        for (i, (a, b)) in out.coords().iter().zip(s.coords()).enumerate() {
            if i % 3 == axis.index() {
                prop_assert_eq!(*a, 0.0);
            } else {
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn augmentations_keep_padding_zero(seed in any::<u64>(), valid in 1usize..20, strategies in prop::collection::vec(strategy(), 1..4)) {
        let s = padded(valid, 20, 6, seed);
        let pipeline = AugmentationPipeline::new(strategies).unwrap();
        let out = pipeline.apply(&s, &mut RngStream::new(seed ^ 5));
        prop_assert_eq!(out.valid_frames(), valid);
        prop_assert!(tail_is_zero(&out));
        prop_assert!(out.coords().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn identity_parameters_are_exact(seed in any::<u64>()) {
        let s = sequence(3, 1, 4, seed);
        prop_assert_eq!(apply_shear(&s, &ShearSample::from_factors([0.0; 6])), s.clone());
        prop_assert_eq!(apply_rotation(&s, &RotationSample::from_angles(Axis::Y, [0.0; 3])), s);
    }

    #[test]
    fn queue_matches_reference_fifo(cap in 1usize..12, batches in prop::collection::vec(0usize..6, 1..40)) {
        let mut q = KeyQueue::new(cap, 1).unwrap();
        let mut model: VecDeque<f64> = VecDeque::new();
        let mut next = 0.0;
        for b in batches {
            let batch: Vec<Vec<f64>> = (0..b).map(|i| vec![next + i as f64]).collect();
            next += b as f64;
            let res = q.enqueue(&batch);
            if b > cap {
                prop_assert!(res.is_err());
                continue;
            }
            for k in &batch {
                model.push_back(k[0]);
            }
            while model.len() > cap {
                model.pop_front();
            }
            prop_assert!(q.len() <= cap);
            let got: Vec<f64> = q.current_negatives().iter().map(|k| k[0]).collect();
            prop_assert_eq!(got, model.iter().copied().collect::<Vec<_>>());
        }
    }

    #[test]
    fn cross_entropy_ignores_logit_shift(logits in prop::collection::vec(-20.0f64..20.0, 2..10), c in -50.0f64..50.0) {
        let (a, _) = softmax_cross_entropy(&logits, 0).unwrap();
        let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
        let (b, _) = softmax_cross_entropy(&shifted, 0).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn info_nce_ignores_negative_order(seed in any::<u64>(), k in 1usize..10, dim in 1usize..6) {
        let mut rng = RngStream::new(seed);
        let mut vecs = |n: usize| -> Vec<Vec<f64>> { (0..n).map(|_| (0..dim).map(|_| rng.normal()).collect()).collect() };
        let q = vecs(1).remove(0);
        let pos = vecs(1).remove(0);
        let negs = vecs(k);
        let mut perm = negs.clone();
        RngStream::new(seed ^ 6).shuffle(&mut perm);
        let a = info_nce(&q, &pos, &negs, 0.3).unwrap();
        let b = info_nce(&q, &pos, &perm, 0.3).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn encoder_container_round_trips(seed in any::<u64>(), layers in 1usize..3, hidden in 1usize..6) {
        let p = init_params(&EncoderShape::new(6, hidden, layers), &mut RngStream::new(seed)).unwrap();
        let text = serde_json::to_string(&EncoderCheckpoint::new(&p)).unwrap();
        let back: EncoderCheckpoint = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.into_params().unwrap(), p);
    }

    #[test]
    fn dataset_file_round_trips(seed in any::<u64>(), n in 1usize..5, valid in 1usize..6) {
        let shape = DataShape::new(6, 1, 3, 0, 3).unwrap();
        let seqs: Vec<SkeletonSequence> = (0..n).map(|i| padded(valid, 6, 3, seed.wrapping_add(i as u64))).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let ds = LabeledDataset::new(shape, seqs, labels).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(&buf[..], LoadOptions::default()).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn accuracies_are_ordered(seed in any::<u64>(), classes in 2usize..8, n in 1usize..30) {
        let mut rng = RngStream::new(seed);
        let scores: Vec<Vec<f64>> = (0..n).map(|_| (0..classes).map(|_| rng.normal()).collect()).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(classes)).collect();
        let m = metrics_from_scores(&scores, &labels, classes).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.top1) && (0.0..=1.0).contains(&m.top5));
        prop_assert!(m.top5 >= m.top1);
        prop_assert_eq!(m.support.iter().sum::<usize>(), n);
    }

    #[test]
    fn rng_streams_replay(seed in any::<u64>(), path in prop::collection::vec(any::<u64>(), 0..4)) {
        let mut a = RngStream::new(seed).derive(&path);
        let mut b = RngStream::new(seed).derive(&path);
        for _ in 0..8 {
            prop_assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }
}
