//! Contrastive objective, key dictionaries, and the three training paradigms.
//!
//! * **Queue**: keys come from a momentum-mirrored key encoder and are never
//!   differentiated; negatives are the keys of preceding mini-batches.
//! * **End-to-end**: both encoders receive gradients; negatives are the other
//!   keys of the current mini-batch.
//! * **Memory bank**: no key encoder; one stored representation per sample,
//!   refreshed by per-sample momentum, supplies positives and negatives.

mod bank;
mod loss;
mod queue;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{
    backprop_batch, batch_grad, encode, forward, tap, Encoded, EncoderParams, Gradients,
};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::skeleton::SkeletonSequence;

pub use bank::MemoryBank;
pub use loss::{
    batch_info_nce, contrastive_logits, in_batch_info_nce, info_nce, info_nce_grad, l2_normalize,
    l2_normalize_backward, softmax_cross_entropy, InfoNceGrad,
};
pub use queue::KeyQueue;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    #[default]
    Queue,
    EndToEnd,
    MemoryBank,
}

impl Paradigm {
    pub const ALL: [Paradigm; 3] = [Paradigm::Queue, Paradigm::EndToEnd, Paradigm::MemoryBank];

    pub fn name(self) -> &'static str {
        match self {
            Paradigm::Queue => "queue",
            Paradigm::EndToEnd => "end_to_end",
            Paradigm::MemoryBank => "memory_bank",
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Paradigm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "queue" | "moco" => Ok(Paradigm::Queue),
            "end_to_end" | "e2e" | "endtoend" => Ok(Paradigm::EndToEnd),
            "memory_bank" | "bank" | "memorybank" => Ok(Paradigm::MemoryBank),
            other => Err(Error::Config(format!("unknown paradigm '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    /// Key-encoder momentum `m`.
    pub momentum: f64,
    /// Queue capacity `K`; also the number of sampled negatives for the memory bank.
    pub queue_size: usize,
    pub batch_size: usize,
    pub paradigm: Paradigm,
    /// L2-normalize representations before taking dot products.
    pub normalize: bool,
    /// Start with a full queue of random unit keys instead of an empty one.
    pub random_queue_init: bool,
    /// Per-sample momentum of memory-bank slots.
    pub bank_momentum: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            temperature: 0.06,
            momentum: 0.999,
            queue_size: 16384,
            batch_size: 32,
            paradigm: Paradigm::Queue,
            normalize: false,
            random_queue_init: true,
            bank_momentum: 0.5,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be > 0 (got {})",
                self.temperature
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1) (got {})",
                self.momentum
            )));
        }
        if self.queue_size == 0 {
            return Err(Error::Config("queue_size must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.paradigm == Paradigm::Queue && self.batch_size > self.queue_size {
            return Err(Error::Config(format!(
                "batch_size {} exceeds queue_size {}",
                self.batch_size, self.queue_size
            )));
        }
        if self.paradigm == Paradigm::EndToEnd && self.batch_size < 2 {
            return Err(Error::Config(
                "end-to-end contrast needs batch_size >= 2".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.bank_momentum) {
            return Err(Error::Config(format!(
                "bank_momentum must lie in [0, 1) (got {})",
                self.bank_momentum
            )));
        }
        Ok(())
    }
}

/// Result of one contrastive step, before any parameter update.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub loss: f64,
    pub grad_q: Gradients,
    /// Present only for the end-to-end paradigm.
    pub grad_k: Option<Gradients>,
    /// Detached key (or fresh query, for the bank) representations of this batch.
    pub keys: Vec<Vec<f64>>,
    /// Dictionary size seen by each anchor.
    pub negatives: usize,
}

fn contrast_view(reps: &[Vec<f64>], normalize: bool) -> Vec<Vec<f64>> {
    if normalize {
        reps.iter().map(|r| l2_normalize(r)).collect()
    } else {
        reps.to_vec()
    }
}

fn pull_back(reps: &[Vec<f64>], grads: Vec<Vec<f64>>, normalize: bool) -> Vec<Vec<f64>> {
    if normalize {
        reps.iter()
            .zip(grads)
            .map(|(r, g)| l2_normalize_backward(r, &g))
            .collect()
    } else {
        grads
    }
}

/// Key representations through the key encoder. Nothing on this path is
/// differentiated.
pub fn encode_keys(
    params_k: &EncoderParams,
    keys: &[SkeletonSequence],
    normalize: bool,
) -> Result<Vec<Vec<f64>>> {
    let reps = keys
        .par_iter()
        .map(|s| params_k.head.project(&tap(&forward(params_k, s)?)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(contrast_view(&reps, normalize))
}

/// Queue paradigm: gradient w.r.t. the query encoder only.
pub fn step_queue(
    queries: &[SkeletonSequence],
    keys: &[SkeletonSequence],
    params_q: &EncoderParams,
    params_k: &EncoderParams,
    queue: &KeyQueue,
    cfg: &ContrastiveConfig,
) -> Result<StepOutput> {
    if queries.len() != keys.len() {
        return Err(Error::DimMismatch {
            expected: queries.len(),
            got: keys.len(),
        });
    }
    let key_reps = encode_keys(params_k, keys, cfg.normalize)?;
    let negatives = queue.current_negatives();
    let tau = cfg.temperature;
    let normalize = cfg.normalize;
    let (loss, grad_q) = batch_grad(
        params_q,
        queries,
        Box::new(|reps: &[Vec<f64>]| {
            let view = contrast_view(reps, normalize);
            let (l, g) = batch_info_nce(&view, &key_reps, &negatives, tau)?;
            Ok((l, pull_back(reps, g, normalize)))
        }),
    )?;
    let count = negatives.len();
    Ok(StepOutput {
        loss,
        grad_q,
        grad_k: None,
        keys: key_reps,
        negatives: count,
    })
}

/// End-to-end paradigm: in-batch negatives, gradients for both encoders.
pub fn step_end_to_end(
    queries: &[SkeletonSequence],
    keys: &[SkeletonSequence],
    params_q: &EncoderParams,
    params_k: &EncoderParams,
    cfg: &ContrastiveConfig,
) -> Result<StepOutput> {
    let n = queries.len();
    if n < 2 {
        return Err(Error::Config(
            "end-to-end contrast needs at least 2 samples".into(),
        ));
    }
    if keys.len() != n {
        return Err(Error::DimMismatch {
            expected: n,
            got: keys.len(),
        });
    }
    let enc_q: Vec<Encoded> = queries
        .par_iter()
        .map(|s| encode(params_q, s))
        .collect::<Result<_>>()?;
    let enc_k: Vec<Encoded> = keys
        .par_iter()
        .map(|s| encode(params_k, s))
        .collect::<Result<_>>()?;
    let rq: Vec<Vec<f64>> = enc_q.iter().map(|e| e.projected.clone()).collect();
    let rk: Vec<Vec<f64>> = enc_k.iter().map(|e| e.projected.clone()).collect();
    let vq = contrast_view(&rq, cfg.normalize);
    let vk = contrast_view(&rk, cfg.normalize);
    let (loss, dq, dk) = in_batch_info_nce(&vq, &vk, cfg.temperature)?;
    let dq = pull_back(&rq, dq, cfg.normalize);
    let dk = pull_back(&rk, dk, cfg.normalize);
    let grad_q = backprop_batch(params_q, &enc_q, &dq)?;
    let grad_k = backprop_batch(params_k, &enc_k, &dk)?;
    Ok(StepOutput {
        loss,
        grad_q,
        grad_k: Some(grad_k),
        keys: vk,
        negatives: n - 1,
    })
}

/// Memory-bank paradigm: positives and negatives are bank slots; the slots of
/// the batch are refreshed with the new (detached) query representations.
pub fn step_memory_bank(
    queries: &[SkeletonSequence],
    indices: &[usize],
    params_q: &EncoderParams,
    bank: &mut MemoryBank,
    cfg: &ContrastiveConfig,
    rng: &RngStream,
) -> Result<StepOutput> {
    if queries.len() != indices.len() {
        return Err(Error::DimMismatch {
            expected: queries.len(),
            got: indices.len(),
        });
    }
    let k = cfg.queue_size;
    let sampled: Vec<Vec<usize>> = indices
        .iter()
        .enumerate()
        .map(|(i, &a)| bank.sample_negatives(a, k, &mut rng.split(i as u64)))
        .collect::<Result<_>>()?;
    let tau = cfg.temperature;
    let normalize = cfg.normalize;
    let mut fresh: Vec<Vec<f64>> = Vec::new();
    let bank_ref = &*bank;
    let (loss, grad_q) = batch_grad(
        params_q,
        queries,
        Box::new(|reps: &[Vec<f64>]| {
            let view = contrast_view(reps, normalize);
            let n = view.len() as f64;
            let mut total = 0.0;
            let mut grads = Vec::with_capacity(view.len());
            for ((q, &a), negs) in view.iter().zip(indices).zip(&sampled) {
                let neg: Vec<&[f64]> = negs.iter().map(|&j| bank_ref.slot(j)).collect();
                let g = info_nce_grad(q, bank_ref.slot(a), &neg, tau, false)?;
                total += g.loss;
                grads.push(g.d_query.into_iter().map(|v| v / n).collect());
            }
            fresh = view;
            Ok((total / n, pull_back(reps, grads, normalize)))
        }),
    )?;
    for (&a, f) in indices.iter().zip(&fresh) {
        bank.update(a, f)?;
    }
    Ok(StepOutput {
        loss,
        grad_q,
        grad_k: None,
        keys: fresh,
        negatives: k,
    })
}
