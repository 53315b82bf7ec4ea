//! JSON Lines dataset files.
//!
//! ```text
//! {"meta":{"T":40,"M":1,"J":15,"center_joint":0,"classes":4}}
//! {"label":0,"frames":[[[[x,y,z], ...J], ...M], ...T_actual]}
//! ```
//!
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! save/load cycle reproduces coordinates bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{fit_to_shape, DataShape, LabeledDataset, SkeletonSequence};

#[derive(Serialize, Deserialize)]
struct Header {
    meta: DataShape,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    label: usize,
    frames: Vec<Vec<Vec<[f64; 3]>>>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    /// Subsample sequences longer than the header's T instead of failing.
    pub truncate: bool,
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    load_dataset_with(path, LoadOptions::default())
}

pub fn load_dataset_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<LabeledDataset> {
    let reader = BufReader::new(File::open(path)?);
    read_dataset(reader, opts)
}

pub fn read_dataset(reader: impl BufRead, opts: LoadOptions) -> Result<LabeledDataset> {
    let mut shape: Option<DataShape> = None;
    let mut seqs = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let Some(shape) = shape else {
            let header: Header = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line_no,
                msg: format!("expected meta header: {e}"),
            })?;
            header.meta.validate().map_err(|e| Error::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            shape = Some(header.meta);
            continue;
        };
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        if rec.label >= shape.classes {
            return Err(Error::Shape(format!(
                "line {line_no}: label {} not below class count {}",
                rec.label, shape.classes
            )));
        }
        let seq = SkeletonSequence::from_nested(&rec.frames)
            .map_err(|e| Error::Shape(format!("line {line_no}: {e}")))?;
        if seq.joints() != shape.joints {
            return Err(Error::Shape(format!(
                "line {line_no}: {} joints, header says J={}",
                seq.joints(),
                shape.joints
            )));
        }
        if !seq.coords().iter().all(|v| v.is_finite()) {
            return Err(Error::Parse {
                line: line_no,
                msg: "non-finite coordinate".into(),
            });
        }
        let seq = fit_to_shape(&seq, &shape, opts.truncate)
            .map_err(|e| Error::Shape(format!("line {line_no}: {e}")))?;
        seqs.push(seq);
        labels.push(rec.label);
    }
    let shape = shape.ok_or(Error::EmptyDataset)?;
    if seqs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    LabeledDataset::new(shape, seqs, labels)
}

pub fn save_dataset(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_dataset(ds: &LabeledDataset, w: &mut impl Write) -> Result<()> {
    serde_json::to_writer(&mut *w, &Header { meta: *ds.shape() })?;
    w.write_all(b"\n")?;
    for (seq, &label) in ds.sequences().iter().zip(ds.labels()) {
        let rec = Record {
            label,
            frames: seq.to_nested(),
        };
        serde_json::to_writer(&mut *w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
