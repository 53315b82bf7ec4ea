//! Self-describing encoder container (JSON, exact 64-bit round trip).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncoderParams, EncoderShape};
use crate::error::{Error, Result};
use crate::params::Params;

pub const CHECKPOINT_FORMAT: &str = "skelcon-encoder";
pub const CHECKPOINT_VERSION: u32 = 1;
/// Row-block order of the stacked gate matrices.
pub const GATE_ORDER: &str = "input,forget,cell,output";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderCheckpoint {
    pub format: String,
    pub version: u32,
    pub gate_order: String,
    pub shape: EncoderShape,
    pub params: EncoderParams,
}

impl EncoderCheckpoint {
    pub fn new(params: &EncoderParams) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            gate_order: GATE_ORDER.into(),
            shape: params.shape(),
            params: params.clone(),
        }
    }

    /// Rejects foreign formats, other gate orders and inconsistent shapes.
    pub fn validate(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unknown format '{}'",
                self.format
            )));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {}",
                self.version
            )));
        }
        if self.gate_order != GATE_ORDER {
            return Err(Error::Checkpoint(format!(
                "gate order '{}' does not match '{GATE_ORDER}'",
                self.gate_order
            )));
        }
        let expected = EncoderParams::zeros(&self.shape);
        crate::params::same_layout(&expected, &self.params).map_err(|e| {
            Error::Checkpoint(format!("shape metadata disagrees with tensors: {e}"))
        })?;
        if self
            .params
            .layers
            .iter()
            .any(|l| l.hidden != self.shape.hidden)
        {
            return Err(Error::Checkpoint(
                "layer hidden size disagrees with metadata".into(),
            ));
        }
        if !self.params.is_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn into_params(self) -> Result<EncoderParams> {
        self.validate()?;
        Ok(self.params)
    }
}

pub fn save_encoder(params: &EncoderParams, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &EncoderCheckpoint::new(params))?;
    w.flush()?;
    Ok(())
}

pub fn load_encoder(path: impl AsRef<Path>) -> Result<EncoderParams> {
    let ck: EncoderCheckpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    ck.into_params()
}
