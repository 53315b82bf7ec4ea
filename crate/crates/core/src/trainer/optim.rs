use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{same_layout, Params};

/// SGD hyperparameters. Weight decay is added to the gradient of tensors the
/// parameter tree marks as decayed (weights, not biases).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    pub nesterov: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            weight_decay: 1e-4,
            nesterov: false,
        }
    }
}

/// Velocity buffers matching a parameter tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdState {
    pub velocity: Vec<Vec<f64>>,
    pub steps: u64,
}

impl SgdState {
    pub fn new<P: Params>(params: &P) -> Self {
        Self {
            velocity: params
                .tensors()
                .iter()
                .map(|t| vec![0.0; t.len()])
                .collect(),
            steps: 0,
        }
    }
}

/// One step of momentum SGD:
///
/// ```text
/// g' = g + wd * theta          (decayed tensors only)
/// v  = mu * v + g'
/// theta -= lr * v              (classical)
/// theta -= lr * (g' + mu * v)  (Nesterov)
/// ```
pub fn sgd_step<P: Params>(
    params: &mut P,
    grads: &P,
    state: &mut SgdState,
    lr: f64,
    cfg: &SgdConfig,
) -> Result<()> {
    same_layout(params, grads)?;
    let mask = params.decay_mask();
    if state.velocity.len() != mask.len() {
        return Err(Error::Shape(
            "optimizer state does not match parameters".into(),
        ));
    }
    let mu = cfg.momentum;
    for (((theta, g), v), decay) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.velocity.iter_mut())
        .zip(mask)
    {
        let wd = if decay { cfg.weight_decay } else { 0.0 };
        for ((t, gi), vi) in theta.iter_mut().zip(g).zip(v.iter_mut()) {
            let gd = gi + wd * *t;
            *vi = mu * *vi + gd;
            let step = if cfg.nesterov { gd + mu * *vi } else { *vi };
            *t -= lr * step;
        }
    }
    state.steps += 1;
    if !params.is_finite() {
        return Err(Error::Divergence(
            "non-finite parameter after SGD step".into(),
        ));
    }
    Ok(())
}

/// Rescales `grads` so its global L2 norm is at most `max_norm`.
pub fn clip_grad_norm<P: Params>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads.sq_norm().sqrt();
    if norm > max_norm && norm > 0.0 {
        crate::params::scale(grads, max_norm / norm);
    }
    norm
}

/// Piecewise-constant schedule: `base * factor^(number of milestones <= epoch)`.
pub fn step_schedule(base: f64, factor: f64, milestones: &[usize], epoch: usize) -> f64 {
    let passed = milestones.iter().filter(|&&m| epoch >= m).count();
    base * factor.powi(passed as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two tensors: a decayed weight and an undecayed bias.
    #[derive(Clone, Debug, PartialEq)]
    struct Toy {
        w: Vec<f64>,
        b: Vec<f64>,
    }

    impl Params for Toy {
        fn tensors(&self) -> Vec<&[f64]> {
            vec![&self.w, &self.b]
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.w, &mut self.b]
        }
        fn decay_mask(&self) -> Vec<bool> {
            vec![true, false]
        }
    }

    fn toy(w: f64, b: f64) -> Toy {
        Toy {
            w: vec![w],
            b: vec![b],
        }
    }

    #[test]
    fn plain_sgd() {
        let mut p = toy(1.0, 1.0);
        let mut s = SgdState::new(&p);
        let cfg = SgdConfig {
            momentum: 0.0,
            weight_decay: 0.0,
            nesterov: false,
        };
        sgd_step(&mut p, &toy(2.0, 2.0), &mut s, 0.1, &cfg).unwrap();
        assert!((p.w[0] - 0.8).abs() < 1e-15);
        assert!((p.b[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn velocity_decays_geometrically() {
        let mut p = toy(0.0, 0.0);
        let mut s = SgdState::new(&p);
        let cfg = SgdConfig {
            momentum: 0.9,
            weight_decay: 0.0,
            nesterov: false,
        };
        sgd_step(&mut p, &toy(1.0, 0.0), &mut s, 0.1, &cfg).unwrap();
        let mut expected_theta = -0.1;
        let mut v = 1.0;
        for _ in 0..5 {
            sgd_step(&mut p, &toy(0.0, 0.0), &mut s, 0.1, &cfg).unwrap();
            v *= 0.9;
            expected_theta -= 0.1 * v;
            assert!((s.velocity[0][0] - v).abs() < 1e-15);
            assert!((p.w[0] - expected_theta).abs() < 1e-15);
        }
    }

    #[test]
    fn decay_on_weights_only() {
        let mut p = toy(1.0, 1.0);
        let mut s = SgdState::new(&p);
        let cfg = SgdConfig {
            momentum: 0.0,
            weight_decay: 1e-4,
            nesterov: false,
        };
        sgd_step(&mut p, &toy(0.0, 0.0), &mut s, 0.01, &cfg).unwrap();
        assert!((p.w[0] - 0.999999).abs() < 1e-15);
        assert_eq!(p.b[0], 1.0);
    }

    #[test]
    fn nesterov_first_step() {
        let mut p = toy(0.0, 0.0);
        let mut s = SgdState::new(&p);
        let cfg = SgdConfig {
            momentum: 0.9,
            weight_decay: 0.0,
            nesterov: true,
        };
        sgd_step(&mut p, &toy(1.0, 0.0), &mut s, 1.0, &cfg).unwrap();
        assert!((p.w[0] + 1.9).abs() < 1e-15);
    }

    #[test]
    fn schedule() {
        assert_eq!(step_schedule(0.01, 0.1, &[30], 0), 0.01);
        assert!((step_schedule(0.01, 0.1, &[30], 30) - 0.001).abs() < 1e-18);
        assert!((step_schedule(0.01, 0.1, &[30], 59) - 0.001).abs() < 1e-18);
        assert_eq!(step_schedule(1.0, 0.5, &[15, 35, 60, 75], 80), 0.0625);
    }

    #[test]
    fn clipping() {
        let mut g = toy(3.0, 4.0);
        let n = clip_grad_norm(&mut g, 1.0);
        assert_eq!(n, 5.0);
        assert!((g.sq_norm() - 1.0).abs() < 1e-12);
    }
}
