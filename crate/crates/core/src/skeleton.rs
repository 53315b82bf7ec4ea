//! Skeleton sequences, labeled datasets, and shape handling.
//!
//! Coordinates are stored flat in `[T][M][J][3]` order, so a frame is a
//! contiguous slice of `M * J * 3` values in (actor, joint, axis) order. That
//! slice is exactly the per-step input vector fed to the encoder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Target tensor shape for a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataShape {
    #[serde(rename = "T")]
    pub frames: usize,
    #[serde(rename = "M")]
    pub actors: usize,
    #[serde(rename = "J")]
    pub joints: usize,
    pub center_joint: usize,
    pub classes: usize,
}

impl DataShape {
    pub fn new(
        frames: usize,
        actors: usize,
        joints: usize,
        center_joint: usize,
        classes: usize,
    ) -> Result<Self> {
        let shape = Self {
            frames,
            actors,
            joints,
            center_joint,
            classes,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.actors == 0 || self.joints == 0 || self.classes == 0 {
            return Err(Error::Shape(format!(
                "all of T, M, J, classes must be >= 1 (got T={}, M={}, J={}, classes={})",
                self.frames, self.actors, self.joints, self.classes
            )));
        }
        if self.center_joint >= self.joints {
            return Err(Error::IndexOutOfRange {
                index: self.center_joint,
                len: self.joints,
            });
        }
        Ok(())
    }

    /// Length of one flattened frame: `M * J * 3`.
    pub fn frame_dim(&self) -> usize {
        self.actors * self.joints * 3
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonSequence {
    frames: usize,
    actors: usize,
    joints: usize,
    valid_frames: usize,
    coords: Vec<f64>,
}

impl SkeletonSequence {
    pub fn zeros(frames: usize, actors: usize, joints: usize) -> Self {
        Self {
            frames,
            actors,
            joints,
            valid_frames: frames,
            coords: vec![0.0; frames * actors * joints * 3],
        }
    }

    /// Builds a sequence from flat `[T][M][J][3]` coordinates. All frames are valid.
    pub fn from_flat(
        frames: usize,
        actors: usize,
        joints: usize,
        coords: Vec<f64>,
    ) -> Result<Self> {
        let expected = frames * actors * joints * 3;
        if coords.len() != expected {
            return Err(Error::DimMismatch {
                expected,
                got: coords.len(),
            });
        }
        if frames == 0 || actors == 0 || joints == 0 {
            return Err(Error::Shape("sequence dimensions must be >= 1".into()));
        }
        Ok(Self {
            frames,
            actors,
            joints,
            valid_frames: frames,
            coords,
        })
    }

    /// Builds a sequence from nested `frames[t][actor][joint] = [x, y, z]`.
    pub fn from_nested(frames: &[Vec<Vec<[f64; 3]>>]) -> Result<Self> {
        let t = frames.len();
        if t == 0 {
            return Err(Error::Shape("sequence has no frames".into()));
        }
        let m = frames[0].len();
        let j = frames[0].first().map_or(0, Vec::len);
        let mut coords = Vec::with_capacity(t * m * j * 3);
        for (ti, frame) in frames.iter().enumerate() {
            if frame.len() != m {
                return Err(Error::Shape(format!(
                    "frame {ti} has {} actors, expected {m}",
                    frame.len()
                )));
            }
            for actor in frame {
                if actor.len() != j {
                    return Err(Error::Shape(format!(
                        "frame {ti} has {} joints, expected {j}",
                        actor.len()
                    )));
                }
                for p in actor {
                    coords.extend_from_slice(p);
                }
            }
        }
        Self::from_flat(t, m, j, coords)
    }

    /// Nested view of the valid frames, inverse of [`from_nested`](Self::from_nested).
    pub fn to_nested(&self) -> Vec<Vec<Vec<[f64; 3]>>> {
        (0..self.valid_frames)
            .map(|t| {
                (0..self.actors)
                    .map(|a| (0..self.joints).map(|j| self.point(t, a, j)).collect())
                    .collect()
            })
            .collect()
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn actors(&self) -> usize {
        self.actors
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn valid_frames(&self) -> usize {
        self.valid_frames
    }

    pub fn frame_dim(&self) -> usize {
        self.actors * self.joints * 3
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let d = self.frame_dim();
        &self.coords[t * d..(t + 1) * d]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        let d = self.frame_dim();
        &mut self.coords[t * d..(t + 1) * d]
    }

    /// The valid (non-padded) part of the coordinate buffer.
    pub fn valid_coords(&self) -> &[f64] {
        &self.coords[..self.valid_frames * self.frame_dim()]
    }

    pub fn valid_coords_mut(&mut self) -> &mut [f64] {
        let n = self.valid_frames * self.frame_dim();
        &mut self.coords[..n]
    }

    #[inline]
    fn offset(&self, t: usize, actor: usize, joint: usize) -> usize {
        ((t * self.actors + actor) * self.joints + joint) * 3
    }

    pub fn point(&self, t: usize, actor: usize, joint: usize) -> [f64; 3] {
        let o = self.offset(t, actor, joint);
        [self.coords[o], self.coords[o + 1], self.coords[o + 2]]
    }

    pub fn set_point(&mut self, t: usize, actor: usize, joint: usize, p: [f64; 3]) {
        let o = self.offset(t, actor, joint);
        self.coords[o..o + 3].copy_from_slice(&p);
    }

    /// Checks finiteness and that padded frames are exactly zero.
    pub fn validate(&self) -> Result<()> {
        if self.valid_frames > self.frames {
            return Err(Error::Shape("valid_frames exceeds frame count".into()));
        }
        if !self.coords.iter().all(|v| v.is_finite()) {
            return Err(Error::Shape("non-finite coordinate".into()));
        }
        let tail = &self.coords[self.valid_frames * self.frame_dim()..];
        if tail.iter().any(|&v| v != 0.0) {
            return Err(Error::Shape("padded frames must be zero".into()));
        }
        Ok(())
    }

    pub fn matches(&self, shape: &DataShape) -> bool {
        self.frames == shape.frames && self.actors == shape.actors && self.joints == shape.joints
    }

    /// Applies `f` to every 3-vector of the valid frames.
    pub fn map_points(&self, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = self.clone();
        for p in out.valid_coords_mut().chunks_exact_mut(3) {
            let v = f([p[0], p[1], p[2]]);
            p.copy_from_slice(&v);
        }
        out
    }
}

/// Subtracts actor 0's center joint of each valid frame from every joint of every actor.
pub fn normalize_center(seq: &SkeletonSequence, center_joint: usize) -> Result<SkeletonSequence> {
    if center_joint >= seq.joints {
        return Err(Error::IndexOutOfRange {
            index: center_joint,
            len: seq.joints,
        });
    }
    let mut out = seq.clone();
    for t in 0..seq.valid_frames {
        let c = seq.point(t, 0, center_joint);
        for p in out.frame_mut(t).chunks_exact_mut(3) {
            p[0] -= c[0];
            p[1] -= c[1];
            p[2] -= c[2];
        }
    }
    Ok(out)
}

/// Zero-pads frames and actors up to `shape`. Fails if the input is longer than `shape.frames`.
pub fn pad_to_shape(seq: &SkeletonSequence, shape: &DataShape) -> Result<SkeletonSequence> {
    if seq.frames > shape.frames {
        return Err(Error::Shape(format!(
            "sequence has {} frames, target T={} (enable truncation to subsample)",
            seq.frames, shape.frames
        )));
    }
    if seq.actors > shape.actors {
        return Err(Error::Shape(format!(
            "sequence has {} actors, target M={}",
            seq.actors, shape.actors
        )));
    }
    if seq.joints != shape.joints {
        return Err(Error::Shape(format!(
            "sequence has {} joints, target J={}",
            seq.joints, shape.joints
        )));
    }
    if seq.frames == shape.frames && seq.actors == shape.actors {
        return Ok(seq.clone());
    }
    let mut out = SkeletonSequence::zeros(shape.frames, shape.actors, shape.joints);
    out.valid_frames = seq.valid_frames;
    for t in 0..seq.frames {
        for a in 0..seq.actors {
            for j in 0..seq.joints {
                out.set_point(t, a, j, seq.point(t, a, j));
            }
        }
    }
    Ok(out)
}

/// Brings an arbitrary recording to `shape`: keeps the first `M` actors, subsamples
/// with a uniform stride when longer than `T` and `truncate` is set, then zero-pads.
pub fn fit_to_shape(
    seq: &SkeletonSequence,
    shape: &DataShape,
    truncate: bool,
) -> Result<SkeletonSequence> {
    let mut work = seq.clone();
    if work.actors > shape.actors {
        let mut kept = SkeletonSequence::zeros(work.frames, shape.actors, work.joints);
        kept.valid_frames = work.valid_frames;
        for t in 0..work.frames {
            for a in 0..shape.actors {
                for j in 0..work.joints {
                    kept.set_point(t, a, j, work.point(t, a, j));
                }
            }
        }
        work = kept;
    }
    if work.valid_frames > shape.frames {
        if !truncate {
            return Err(Error::Shape(format!(
                "sequence has {} frames, target T={} (enable truncation to subsample)",
                work.valid_frames, shape.frames
            )));
        }
        let n = work.valid_frames;
        let mut sub = SkeletonSequence::zeros(shape.frames, work.actors, work.joints);
        for i in 0..shape.frames {
            let src = i * n / shape.frames;
            sub.frame_mut(i).copy_from_slice(work.frame(src));
        }
        work = sub;
    } else if work.frames > shape.frames {
        // only zero padding beyond the target length; drop it
        let d = work.frame_dim();
        work.coords.truncate(shape.frames * d);
        work.frames = shape.frames;
    }
    pad_to_shape(&work, shape)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    shape: DataShape,
    sequences: Vec<SkeletonSequence>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(
        shape: DataShape,
        sequences: Vec<SkeletonSequence>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        shape.validate()?;
        if sequences.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if sequences.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} sequences but {} labels",
                sequences.len(),
                labels.len()
            )));
        }
        for (i, (s, &y)) in sequences.iter().zip(&labels).enumerate() {
            if !s.matches(&shape) {
                return Err(Error::Shape(format!(
                    "sequence {i} is {}x{}x{}, expected {}x{}x{}",
                    s.frames, s.actors, s.joints, shape.frames, shape.actors, shape.joints
                )));
            }
            if y >= shape.classes {
                return Err(Error::Shape(format!(
                    "sequence {i} has label {y} but only {} classes",
                    shape.classes
                )));
            }
        }
        Ok(Self {
            shape,
            sequences,
            labels,
        })
    }

    pub fn shape(&self) -> &DataShape {
        &self.shape
    }

    pub fn sequences(&self) -> &[SkeletonSequence] {
        &self.sequences
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.shape.classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let seqs = indices.iter().map(|&i| self.sequences[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(self.shape, seqs, labels)
    }

    /// Same data with every label replaced.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(self.shape, self.sequences.clone(), labels)
    }

    /// Center-normalizes every sequence around the shape's center joint.
    pub fn normalized(&self) -> Result<Self> {
        let seqs = self
            .sequences
            .iter()
            .map(|s| normalize_center(s, self.shape.center_joint))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.shape, seqs, self.labels.clone())
    }

    /// Concatenates two datasets of identical shape.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape(
                "cannot concatenate datasets of different shape".into(),
            ));
        }
        let mut seqs = self.sequences.clone();
        seqs.extend(other.sequences.iter().cloned());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self::new(self.shape, seqs, labels)
    }
}

fn per_class_take(fraction: f64, size: usize) -> usize {
    // the epsilon absorbs products such as 0.07 * 100 = 7.000000000000001
    ((fraction * size as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Class-balanced sample without replacement: `ceil(fraction * class_size)` per class.
pub fn balanced_subset(ds: &LabeledDataset, fraction: f64, seed: u64) -> Result<LabeledDataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "fraction {fraction} must lie in (0, 1]"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.shape.classes];
    for (i, &y) in ds.labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut rng = RngStream::new(seed);
    let mut picked = Vec::new();
    for (c, members) in by_class.iter_mut().enumerate() {
        let take = per_class_take(fraction, members.len());
        if take == 0 {
            return Err(Error::Config(format!(
                "fraction {fraction} selects no samples of class {c} ({} available)",
                members.len()
            )));
        }
        let mut stream = rng.split(c as u64);
        stream.shuffle(members);
        picked.extend_from_slice(&members[..take]);
    }
    rng.shuffle(&mut picked);
    ds.subset(&picked)
}
