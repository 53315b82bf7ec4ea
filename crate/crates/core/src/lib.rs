//! Contrastive action-representation learning over 3D skeleton sequences.
//!
//! Two augmented views of each sequence are encoded by an LSTM query encoder
//! and a momentum-mirrored key encoder, pooled over time, and contrasted with
//! InfoNCE against a FIFO queue of earlier keys. The learned query encoder is
//! then judged by linear evaluation on frozen features.
//!
//! Module map:
//!
//! * [`skeleton`], [`dataset_io`], [`synthetic`]: data model, JSONL files, synthetic data
//! * [`augment`]: the seven augmentation strategies and pipelines
//! * [`encoder`]: LSTM, pooling, heads, momentum update, gradients
//! * [`contrastive`]: InfoNCE, key queue, memory bank, paradigm steps
//! * [`trainer`]: pretraining loop, SGD, schedules, checkpoints
//! * [`evaluation`]: linear evaluation, semi-supervised protocol, comparisons

// `!(x > 0.0)` checks are meant to reject NaN; index loops mirror the math.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity
)]

pub mod augment;
pub mod contrastive;
pub mod dataset_io;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod params;
pub mod rng;
pub mod skeleton;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
pub use params::Params;
pub use rng::RngStream;
pub use skeleton::{DataShape, LabeledDataset, SkeletonSequence};
