//! Pretraining loop: augmented pairs, contrastive step, SGD on the query
//! encoder, momentum mirroring of the key encoder, dictionary refresh.
//!
//! All randomness is derived from the run seed and the loop counters:
//!
//! | stream                      | use                           |
//! |-----------------------------|-------------------------------|
//! | `seed / INIT`               | encoder initialization        |
//! | `seed / DICT`               | initial queue or bank content |
//! | `seed / SHUFFLE / epoch`    | sample order of one epoch     |
//! | `seed / AUG / step / i`     | views of the i-th batch item  |
//! | `seed / NEG / step`         | memory-bank negative sampling |
//!
//! Resuming therefore only needs the counters, not generator states.

mod log;
mod optim;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_pair, AugmentationPipeline};
use crate::contrastive::{
    step_end_to_end, step_memory_bank, step_queue, ContrastiveConfig, KeyQueue, MemoryBank,
    Paradigm, StepOutput,
};
use crate::encoder::{
    init_params, momentum_update, EncoderCheckpoint, EncoderParams, EncoderShape, HeadKind,
};
use crate::error::{Error, Result};
use crate::params::Params;
use crate::rng::RngStream;
use crate::skeleton::{DataShape, LabeledDataset, SkeletonSequence};

pub use log::{EpochSummary, LossLog, StepRecord};
pub use optim::{clip_grad_norm, sgd_step, step_schedule, SgdConfig, SgdState};

const STREAM_INIT: u64 = 1;
const STREAM_DICT: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_AUG: u64 = 4;
const STREAM_NEG: u64 = 5;

pub const TRAINER_FORMAT: &str = "skelcon-trainer";
pub const TRAINER_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_milestones: Vec<usize>,
    pub sgd: SgdConfig,
    pub hidden: usize,
    pub layers: usize,
    pub head: HeadKind,
    /// Projection output width; defaults to `hidden`.
    pub head_dim: Option<usize>,
    pub contrastive: ContrastiveConfig,
    pub pipeline: AugmentationPipeline,
    pub seed: u64,
    /// Global gradient-norm cap; off by default.
    pub grad_clip: Option<f64>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            lr: 0.01,
            lr_decay: 0.1,
            lr_milestones: vec![30],
            sgd: SgdConfig::default(),
            hidden: 256,
            layers: 2,
            head: HeadKind::None,
            head_dim: None,
            contrastive: ContrastiveConfig::default(),
            pipeline: AugmentationPipeline::default_pair(),
            seed: 0,
            grad_clip: None,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be > 0 (got {})", self.lr)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return Err(Error::Config(format!(
                "lr_decay must be > 0 (got {})",
                self.lr_decay
            )));
        }
        if self.lr_milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "lr_milestones must be strictly increasing".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.sgd.momentum) || self.sgd.weight_decay < 0.0 {
            return Err(Error::Config(
                "SGD momentum must lie in [0, 1) and weight decay be >= 0".into(),
            ));
        }
        if self.hidden == 0 || self.layers == 0 {
            return Err(Error::Config("hidden and layers must be >= 1".into()));
        }
        if self.head_dim == Some(0) {
            return Err(Error::Config("head_dim must be >= 1".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("grad_clip must be > 0 (got {c})")));
            }
        }
        self.contrastive.validate()
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        step_schedule(self.lr, self.lr_decay, &self.lr_milestones, epoch)
    }

    pub fn encoder_shape(&self, data: &DataShape) -> EncoderShape {
        EncoderShape::new(data.frame_dim(), self.hidden, self.layers)
            .with_head(self.head, self.head_dim.unwrap_or(self.hidden))
    }
}

/// Learning rate for `epoch` under `config`.
pub fn lr_at(epoch: usize, config: &PretrainConfig) -> f64 {
    config.lr_at(epoch)
}

/// Full mutable state of a pretraining run.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: PretrainConfig,
    data_shape: DataShape,
    dataset_len: usize,
    params_q: EncoderParams,
    params_k: EncoderParams,
    opt_q: SgdState,
    /// Only the end-to-end paradigm optimizes the key encoder.
    opt_k: Option<SgdState>,
    queue: Option<KeyQueue>,
    bank: Option<MemoryBank>,
    epoch: usize,
    batch: usize,
    step: u64,
    log: LossLog,
}

impl Trainer {
    /// Fresh state for `dataset`, which should already be center-normalized.
    pub fn new(dataset: &LabeledDataset, config: PretrainConfig) -> Result<Self> {
        config.validate()?;
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let cc = &config.contrastive;
        if dataset.len() < cc.batch_size {
            return Err(Error::Config(format!(
                "dataset of {} sequences cannot fill one batch of {}",
                dataset.len(),
                cc.batch_size
            )));
        }
        if cc.paradigm == Paradigm::MemoryBank && cc.queue_size + 1 > dataset.len() {
            return Err(Error::Config(format!(
                "memory bank needs more than {} samples to draw {} negatives",
                dataset.len(),
                cc.queue_size
            )));
        }
        let root = RngStream::new(config.seed);
        let shape = config.encoder_shape(dataset.shape());
        let params_q = init_params(&shape, &mut root.split(STREAM_INIT))?;
        let params_k = params_q.clone();
        let dim = params_q.output_dim();
        let mut dict_rng = root.split(STREAM_DICT);
        let (queue, bank) = match cc.paradigm {
            Paradigm::Queue => {
                let q = if cc.random_queue_init {
                    KeyQueue::random(cc.queue_size, dim, &mut dict_rng)?
                } else {
                    KeyQueue::new(cc.queue_size, dim)?
                };
                (Some(q), None)
            }
            Paradigm::EndToEnd => (None, None),
            Paradigm::MemoryBank => (
                None,
                Some(MemoryBank::random(
                    dataset.len(),
                    dim,
                    cc.bank_momentum,
                    &mut dict_rng,
                )?),
            ),
        };
        let opt_q = SgdState::new(&params_q);
        let opt_k = (cc.paradigm == Paradigm::EndToEnd).then(|| SgdState::new(&params_k));
        Ok(Self {
            config,
            data_shape: *dataset.shape(),
            dataset_len: dataset.len(),
            params_q,
            params_k,
            opt_q,
            opt_k,
            queue,
            bank,
            epoch: 0,
            batch: 0,
            step: 0,
            log: LossLog::new(),
        })
    }

    pub fn config(&self) -> &PretrainConfig {
        &self.config
    }

    pub fn params_q(&self) -> &EncoderParams {
        &self.params_q
    }

    pub fn params_k(&self) -> &EncoderParams {
        &self.params_k
    }

    pub fn queue(&self) -> Option<&KeyQueue> {
        self.queue.as_ref()
    }

    pub fn bank(&self) -> Option<&MemoryBank> {
        self.bank.as_ref()
    }

    pub fn log(&self) -> &LossLog {
        &self.log
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn global_step(&self) -> u64 {
        self.step
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.dataset_len / self.config.contrastive.batch_size
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    fn check_dataset(&self, ds: &LabeledDataset) -> Result<()> {
        if ds.len() != self.dataset_len || ds.shape() != &self.data_shape {
            return Err(Error::Shape(format!(
                "trainer state was built for {} sequences of shape {:?}, got {} of {:?}",
                self.dataset_len,
                self.data_shape,
                ds.len(),
                ds.shape()
            )));
        }
        Ok(())
    }

    /// Dataset indices of the current mini-batch.
    pub fn batch_indices(&self) -> Vec<usize> {
        let n = self.config.contrastive.batch_size;
        let perm = RngStream::new(self.config.seed)
            .derive(&[STREAM_SHUFFLE, self.epoch as u64])
            .permutation(self.dataset_len);
        perm[self.batch * n..(self.batch + 1) * n].to_vec()
    }

    /// One optimization step on the next mini-batch.
    pub fn step(&mut self, ds: &LabeledDataset) -> Result<StepRecord> {
        if self.finished() {
            return Err(Error::Config("training already finished".into()));
        }
        self.check_dataset(ds)?;
        let (epoch, step) = (self.epoch, self.step);
        self.step_inner(ds).map_err(|e| match e {
            Error::Divergence(msg) => {
                Error::Divergence(format!("epoch {epoch}, step {step}: {msg}"))
            }
            other => other,
        })
    }

    fn step_inner(&mut self, ds: &LabeledDataset) -> Result<StepRecord> {
        let root = RngStream::new(self.config.seed);
        let indices = self.batch_indices();
        let pipeline = &self.config.pipeline;
        let step = self.step;
        let (queries, keys): (Vec<SkeletonSequence>, Vec<SkeletonSequence>) = indices
            .par_iter()
            .enumerate()
            .map(|(i, &j)| {
                augment_pair(
                    &ds.sequences()[j],
                    pipeline,
                    &root.derive(&[STREAM_AUG, step, i as u64]),
                )
            })
            .unzip();
        let cc = &self.config.contrastive;
        let lr = self.config.lr_at(self.epoch);
        let out: StepOutput = match cc.paradigm {
            Paradigm::Queue => {
                let queue = self.queue.as_ref().expect("queue paradigm owns a queue");
                step_queue(&queries, &keys, &self.params_q, &self.params_k, queue, cc)?
            }
            Paradigm::EndToEnd => {
                step_end_to_end(&queries, &keys, &self.params_q, &self.params_k, cc)?
            }
            Paradigm::MemoryBank => {
                let bank = self.bank.as_mut().expect("bank paradigm owns a bank");
                step_memory_bank(
                    &queries,
                    &indices,
                    &self.params_q,
                    bank,
                    cc,
                    &root.derive(&[STREAM_NEG, step]),
                )?
            }
        };
        if !out.loss.is_finite() {
            return Err(Error::Divergence(format!("non-finite loss {}", out.loss)));
        }
        let StepOutput {
            loss,
            mut grad_q,
            grad_k,
            keys: key_reps,
            negatives,
        } = out;
        if let Some(c) = self.config.grad_clip {
            clip_grad_norm(&mut grad_q, c);
        }
        sgd_step(
            &mut self.params_q,
            &grad_q,
            &mut self.opt_q,
            lr,
            &self.config.sgd,
        )?;
        let mut fill = negatives;
        match cc.paradigm {
            Paradigm::Queue => {
                momentum_update(&mut self.params_k, &self.params_q, cc.momentum)?;
                let queue = self.queue.as_mut().expect("queue paradigm owns a queue");
                queue.enqueue(&key_reps)?;
                fill = queue.len();
            }
            Paradigm::EndToEnd => {
                let mut gk = grad_k.expect("end-to-end step returns key gradients");
                if let Some(c) = self.config.grad_clip {
                    clip_grad_norm(&mut gk, c);
                }
                let opt_k = self
                    .opt_k
                    .as_mut()
                    .expect("end-to-end owns a key optimizer");
                sgd_step(&mut self.params_k, &gk, opt_k, lr, &self.config.sgd)?;
            }
            Paradigm::MemoryBank => {
                // no key encoder: keep the mirror equal to the query encoder
                self.params_k = self.params_q.clone();
            }
        }
        let rec = StepRecord {
            epoch: self.epoch,
            step: self.step,
            loss,
            lr,
            queue_fill: fill,
        };
        self.log.push(rec.clone());
        self.step += 1;
        self.batch += 1;
        if self.batch == self.batches_per_epoch() {
            self.batch = 0;
            self.epoch += 1;
        }
        Ok(rec)
    }

    /// Runs at most `count` steps, stopping early when training is finished.
    pub fn run_steps(&mut self, ds: &LabeledDataset, count: usize) -> Result<()> {
        for _ in 0..count {
            if self.finished() {
                break;
            }
            self.step(ds)?;
        }
        Ok(())
    }

    /// Runs to the end, calling `on_epoch` after every completed epoch.
    pub fn run_with(
        &mut self,
        ds: &LabeledDataset,
        mut on_epoch: impl FnMut(&Trainer) -> Result<()>,
    ) -> Result<()> {
        while !self.finished() {
            let epoch = self.epoch;
            self.step(ds)?;
            if self.epoch != epoch {
                on_epoch(self)?;
            }
        }
        Ok(())
    }

    pub fn run(&mut self, ds: &LabeledDataset) -> Result<()> {
        self.run_with(ds, |_| Ok(()))
    }

    pub fn to_checkpoint(&self) -> TrainerCheckpoint {
        TrainerCheckpoint {
            format: TRAINER_FORMAT.into(),
            version: TRAINER_VERSION,
            config: self.config.clone(),
            data_shape: self.data_shape,
            dataset_len: self.dataset_len,
            query: EncoderCheckpoint::new(&self.params_q),
            key: EncoderCheckpoint::new(&self.params_k),
            opt_q: self.opt_q.clone(),
            opt_k: self.opt_k.clone(),
            queue: self.queue.clone(),
            bank: self.bank.clone(),
            epoch: self.epoch,
            batch: self.batch,
            step: self.step,
            log: self.log.clone(),
        }
    }

    pub fn from_checkpoint(ck: TrainerCheckpoint) -> Result<Self> {
        ck.validate()?;
        let params_q = ck.query.into_params()?;
        let params_k = ck.key.into_params()?;
        Ok(Self {
            config: ck.config,
            data_shape: ck.data_shape,
            dataset_len: ck.dataset_len,
            params_q,
            params_k,
            opt_q: ck.opt_q,
            opt_k: ck.opt_k,
            queue: ck.queue,
            bank: ck.bank,
            epoch: ck.epoch,
            batch: ck.batch,
            step: ck.step,
            log: ck.log,
        })
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, &self.to_checkpoint())?;
        w.flush()?;
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let ck: TrainerCheckpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        Self::from_checkpoint(ck)
    }

    pub fn into_output(self) -> PretrainOutput {
        PretrainOutput {
            params_q: self.params_q,
            params_k: self.params_k,
            log: self.log,
        }
    }
}

/// Serialized trainer: both encoder containers plus optimizer, dictionary and
/// loop counters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerCheckpoint {
    pub format: String,
    pub version: u32,
    pub config: PretrainConfig,
    pub data_shape: DataShape,
    pub dataset_len: usize,
    pub query: EncoderCheckpoint,
    pub key: EncoderCheckpoint,
    pub opt_q: SgdState,
    pub opt_k: Option<SgdState>,
    pub queue: Option<KeyQueue>,
    pub bank: Option<MemoryBank>,
    pub epoch: usize,
    pub batch: usize,
    pub step: u64,
    pub log: LossLog,
}

impl TrainerCheckpoint {
    pub fn validate(&self) -> Result<()> {
        if self.format != TRAINER_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unknown format '{}'",
                self.format
            )));
        }
        if self.version != TRAINER_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {}",
                self.version
            )));
        }
        self.query.validate()?;
        self.key.validate()?;
        if self.query.shape != self.key.shape {
            return Err(Error::Checkpoint(
                "query and key encoder shapes differ".into(),
            ));
        }
        if self.query.shape != self.config.encoder_shape(&self.data_shape) {
            return Err(Error::Checkpoint(
                "encoder shape disagrees with config".into(),
            ));
        }
        let layout: Vec<usize> = self
            .query
            .params
            .tensors()
            .iter()
            .map(|t| t.len())
            .collect();
        let check_opt = |s: &SgdState| s.velocity.iter().map(Vec::len).eq(layout.iter().copied());
        if !check_opt(&self.opt_q) || self.opt_k.as_ref().is_some_and(|s| !check_opt(s)) {
            return Err(Error::Checkpoint(
                "optimizer state does not match encoder layout".into(),
            ));
        }
        Ok(())
    }
}

pub struct PretrainOutput {
    pub params_q: EncoderParams,
    pub params_k: EncoderParams,
    pub log: LossLog,
}

/// Normalizes `dataset` and runs the full pretraining schedule.
pub fn pretrain(dataset: &LabeledDataset, config: &PretrainConfig) -> Result<PretrainOutput> {
    let ds = dataset.normalized()?;
    let mut trainer = Trainer::new(&ds, config.clone())?;
    trainer.run(&ds)?;
    Ok(trainer.into_output())
}
