//! Helpers shared by the gradient and acceptance targets.

#![allow(dead_code)]

use skelcon_core::encoder::{init_params, EncoderParams, EncoderShape, HeadKind};
use skelcon_core::{Params, RngStream, SkeletonSequence};

pub const STEP: f64 = 1e-5;
pub const PROBES: usize = 200;
pub const TOLERANCE: f64 = 1e-4;

/// Largest relative error between `analytic` and central differences of
/// `loss` over `PROBES` random coordinates (all of them when fewer exist).
pub fn max_rel_error<P: Params + Clone>(
    params: &P,
    analytic: &P,
    loss: impl Fn(&P) -> f64,
    seed: u64,
) -> f64 {
    let n = params.num_params();
    let picks: Vec<usize> = if n <= PROBES {
        (0..n).collect()
    } else {
        RngStream::new(seed).sample_indices(n, PROBES)
    };
    let mut worst: f64 = 0.0;
    for i in picks {
        let mut p = params.clone();
        let x = p.get_flat(i);
        p.set_flat(i, x + STEP);
        let up = loss(&p);
        p.set_flat(i, x - STEP);
        let down = loss(&p);
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic.get_flat(i);
        let scale = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / scale);
    }
    worst
}

pub fn sequences(count: usize, frames: usize, dim: usize, seed: u64) -> Vec<SkeletonSequence> {
    let mut rng = RngStream::new(seed);
    (0..count)
        .map(|_| {
            let coords = (0..frames * dim).map(|_| rng.normal() * 0.6).collect();
            SkeletonSequence::from_flat(frames, 1, dim / 3, coords).unwrap()
        })
        .collect()
}

pub fn encoder(layers: usize, head: HeadKind, seed: u64) -> EncoderParams {
    let shape = EncoderShape::new(6, 5, layers).with_head(head, 4);
    let mut p = init_params(&shape, &mut RngStream::new(seed)).unwrap();
    // push biases off zero so every tensor carries gradient signal
    let mut rng = RngStream::new(seed + 100);
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.uniform_in(-0.3, 0.3);
        }
    }
    p
}
