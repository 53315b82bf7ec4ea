//! Linear evaluation on frozen features, the semi-supervised protocol,
//! representation and paradigm comparisons, and Top-k metrics.
//!
//! Evaluation always sees the original (center-normalized) sequences; nothing
//! here reaches the augmentation module.

mod classifier;
mod metrics;

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrastive::Paradigm;
use crate::encoder::{batch_grad, cae, cae_plus, forward, tap, EncoderParams, ProjectionHead};
use crate::error::{Error, Result};
use crate::params::Params;
use crate::rng::RngStream;
use crate::skeleton::{balanced_subset, LabeledDataset, SkeletonSequence};
use crate::trainer::{pretrain, sgd_step, step_schedule, PretrainConfig, SgdConfig, SgdState};

pub use classifier::{
    classifier_loss_grad, classifier_loss_input_grad, train_linear, LinearClassifier,
};
pub use metrics::{evaluate, metrics_from_scores, top_k, Metrics};

/// Which vector represents a sequence for the downstream classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentationKind {
    /// Last hidden state of the query encoder.
    QueryLast,
    /// Last hidden state of the key encoder.
    KeyLast,
    /// Pooled key-encoder output.
    Key,
    /// Pooled query-encoder output.
    #[default]
    Cae,
    /// Query and key pooled outputs, concatenated.
    CaePlus,
}

impl RepresentationKind {
    pub const ALL: [RepresentationKind; 5] = [
        RepresentationKind::QueryLast,
        RepresentationKind::KeyLast,
        RepresentationKind::Key,
        RepresentationKind::Cae,
        RepresentationKind::CaePlus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RepresentationKind::QueryLast => "query_last",
            RepresentationKind::KeyLast => "key_last",
            RepresentationKind::Key => "key",
            RepresentationKind::Cae => "cae",
            RepresentationKind::CaePlus => "cae_plus",
        }
    }
}

impl fmt::Display for RepresentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RepresentationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s
            .trim()
            .to_ascii_lowercase()
            .replace(['-', '+'], "_")
            .as_str()
        {
            "query_last" | "hq" | "h_q" => Ok(Self::QueryLast),
            "key_last" | "hk" | "h_k" => Ok(Self::KeyLast),
            "key" | "k" => Ok(Self::Key),
            "cae" => Ok(Self::Cae),
            "cae_plus" | "cae_" => Ok(Self::CaePlus),
            other => Err(Error::Config(format!("unknown representation '{other}'"))),
        }
    }
}

/// Feature vector of one sequence.
pub fn extract(
    kind: RepresentationKind,
    params_q: &EncoderParams,
    params_k: &EncoderParams,
    seq: &SkeletonSequence,
) -> Result<Vec<f64>> {
    match kind {
        RepresentationKind::QueryLast => Ok(forward(params_q, seq)?.last().to_vec()),
        RepresentationKind::KeyLast => Ok(forward(params_k, seq)?.last().to_vec()),
        RepresentationKind::Key => tap(&forward(params_k, seq)?),
        RepresentationKind::Cae => cae(params_q, seq),
        RepresentationKind::CaePlus => cae_plus(params_q, params_k, seq),
    }
}

/// Features for every sequence of `ds`, in dataset order.
pub fn extract_features(
    kind: RepresentationKind,
    params_q: &EncoderParams,
    params_k: &EncoderParams,
    ds: &LabeledDataset,
) -> Result<Vec<Vec<f64>>> {
    ds.sequences()
        .par_iter()
        .map(|s| extract(kind, params_q, params_k, s))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub lr: f64,
    pub sgd: SgdConfig,
    pub batch_size: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 0.001,
            sgd: SgdConfig::default(),
            batch_size: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_milestones: Vec<usize>,
    pub sgd: SgdConfig,
    pub batch_size: usize,
    pub representation: RepresentationKind,
    pub finetune: FinetuneConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            epochs: 90,
            lr: 1.0,
            lr_decay: 0.5,
            lr_milestones: vec![15, 35, 60, 75],
            sgd: SgdConfig {
                momentum: 0.9,
                weight_decay: 0.0,
                nesterov: true,
            },
            batch_size: 32,
            representation: RepresentationKind::Cae,
            finetune: FinetuneConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "evaluation epochs and batch_size must be >= 1".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.lr_decay > 0.0) {
            return Err(Error::Config(
                "evaluation lr and lr_decay must be > 0".into(),
            ));
        }
        if self.lr_milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "evaluation lr_milestones must be strictly increasing".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.sgd.momentum) || self.sgd.weight_decay < 0.0 {
            return Err(Error::Config(
                "evaluation momentum must lie in [0, 1)".into(),
            ));
        }
        let ft = &self.finetune;
        if ft.epochs == 0 || ft.batch_size == 0 || !(ft.lr > 0.0) {
            return Err(Error::Config(
                "fine-tune epochs, batch_size and lr must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        step_schedule(self.lr, self.lr_decay, &self.lr_milestones, epoch)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearEvaluation {
    pub metrics: Metrics,
    pub classifier: LinearClassifier,
    /// Encoder checksums, identical before and after.
    pub checksum_q: u64,
    pub checksum_k: u64,
}

fn frozen_checksums(q: &EncoderParams, k: &EncoderParams) -> (u64, u64) {
    (q.checksum(), k.checksum())
}

/// Frozen-feature evaluation: features of both splits, classifier on train,
/// metrics on test. Datasets are center-normalized here.
pub fn linear_evaluation(
    params_q: &EncoderParams,
    params_k: &EncoderParams,
    train: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<LinearEvaluation> {
    cfg.validate()?;
    if train.shape().classes != test.shape().classes {
        return Err(Error::Shape(
            "train and test splits disagree on class count".into(),
        ));
    }
    let before = frozen_checksums(params_q, params_k);
    let (train, test) = (train.normalized()?, test.normalized()?);
    let kind = cfg.representation;
    let xtr = extract_features(kind, params_q, params_k, &train)?;
    let xte = extract_features(kind, params_q, params_k, &test)?;
    let classes = train.shape().classes;
    let classifier = train_linear(&xtr, train.labels(), classes, cfg, seed)?;
    let metrics = evaluate(&classifier, &xte, test.labels())?;
    let after = frozen_checksums(params_q, params_k);
    if before != after {
        return Err(Error::Integrity(
            "encoder changed during linear evaluation".into(),
        ));
    }
    Ok(LinearEvaluation {
        metrics,
        classifier,
        checksum_q: after.0,
        checksum_k: after.1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiSupervised {
    pub fraction: f64,
    pub subset_size: usize,
    pub finetune_losses: Vec<f64>,
    pub metrics: Metrics,
}

/// Fine-tunes a copy of the query encoder together with a classifier on the
/// labeled subset, with cross-entropy through every encoder parameter.
fn finetune(
    params_q: &EncoderParams,
    subset: &LabeledDataset,
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<(EncoderParams, Vec<f64>)> {
    let mut enc = params_q.clone();
    // features are pooled states, so any contrastive head is dropped here
    enc.head = ProjectionHead::None;
    let classes = subset.shape().classes;
    let mut clf = LinearClassifier::zeros(classes, enc.embed_dim());
    let mut opt_enc = SgdState::new(&enc);
    let mut opt_clf = SgdState::new(&clf);
    let root = RngStream::new(seed);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let perm = root.derive(&[epoch as u64]).permutation(subset.len());
        let mut total = 0.0;
        for chunk in perm.chunks(cfg.batch_size) {
            let seqs: Vec<SkeletonSequence> = chunk
                .iter()
                .map(|&i| subset.sequences()[i].clone())
                .collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| subset.labels()[i]).collect();
            let mut clf_grad = None;
            let clf_ref = &clf;
            let (loss, enc_grad) = batch_grad(
                &enc,
                &seqs,
                Box::new(|reps: &[Vec<f64>]| {
                    let (loss, g, d_reps) = classifier_loss_input_grad(clf_ref, reps, &labels)?;
                    clf_grad = Some(g);
                    Ok((loss, d_reps))
                }),
            )?;
            let clf_grad = clf_grad.expect("loss closure ran");
            sgd_step(&mut enc, &enc_grad, &mut opt_enc, cfg.lr, &cfg.sgd)?;
            sgd_step(&mut clf, &clf_grad, &mut opt_clf, cfg.lr, &cfg.sgd)?;
            total += loss * chunk.len() as f64;
        }
        epoch_losses.push(total / subset.len() as f64);
    }
    Ok((enc, epoch_losses))
}

/// Three phases: balanced labeled subset; fine-tune the encoder and a
/// classifier on it; freeze the encoder and retrain a linear classifier on the
/// complete training split.
pub fn semi_supervised(
    params_q: &EncoderParams,
    params_k: &EncoderParams,
    train: &LabeledDataset,
    test: &LabeledDataset,
    fraction: f64,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<SemiSupervised> {
    cfg.validate()?;
    let train_n = train.normalized()?;
    let subset = balanced_subset(&train_n, fraction, seed)?;
    if subset.len() < train_n.shape().classes {
        return Err(Error::Config(format!(
            "labeled subset of {} samples is smaller than the class count",
            subset.len()
        )));
    }
    let (tuned, finetune_losses) = finetune(params_q, &subset, &cfg.finetune, seed)?;
    let eval = linear_evaluation(&tuned, params_k, train, test, cfg, seed)?;
    Ok(SemiSupervised {
        fraction,
        subset_size: subset.len(),
        finetune_losses,
        metrics: eval.metrics,
    })
}

/// One linear evaluation per representation kind, all on the same encoders.
pub fn compare_representations(
    params_q: &EncoderParams,
    params_k: &EncoderParams,
    train: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &EvalConfig,
    kinds: &[RepresentationKind],
    seed: u64,
) -> Result<Vec<(RepresentationKind, Metrics)>> {
    kinds
        .iter()
        .map(|&kind| {
            let c = EvalConfig {
                representation: kind,
                ..cfg.clone()
            };
            linear_evaluation(params_q, params_k, train, test, &c, seed).map(|e| (kind, e.metrics))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParadigmResult {
    pub paradigm: Paradigm,
    pub final_loss: f64,
    pub metrics: Metrics,
}

/// One pretraining plus linear evaluation per paradigm; everything else,
/// seeds included, is shared.
pub fn compare_paradigms(
    train: &LabeledDataset,
    test: &LabeledDataset,
    pretrain_cfg: &PretrainConfig,
    eval_cfg: &EvalConfig,
    paradigms: &[Paradigm],
    seed: u64,
) -> Result<Vec<ParadigmResult>> {
    paradigms
        .iter()
        .map(|&paradigm| {
            let mut pc = pretrain_cfg.clone();
            pc.contrastive.paradigm = paradigm;
            let out = pretrain(train, &pc)?;
            let eval =
                linear_evaluation(&out.params_q, &out.params_k, train, test, eval_cfg, seed)?;
            Ok(ParadigmResult {
                paradigm,
                final_loss: out.log.last_loss().unwrap_or(f64::NAN),
                metrics: eval.metrics,
            })
        })
        .collect()
}

pub fn representation_table_csv(rows: &[(RepresentationKind, Metrics)]) -> String {
    let mut s = String::from("representation,top1,top5\n");
    for (kind, m) in rows {
        let _ = writeln!(s, "{kind},{},{}", m.top1, m.top5);
    }
    s
}

pub fn paradigm_table_csv(rows: &[ParadigmResult]) -> String {
    let mut s = String::from("paradigm,final_loss,top1,top5\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.paradigm, r.final_loss, r.metrics.top1, r.metrics.top5
        );
    }
    s
}
