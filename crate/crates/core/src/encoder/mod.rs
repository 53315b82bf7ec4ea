//! Sequence encoder: stacked LSTM over flattened frames, temporal average
//! pooling, optional projection head, momentum mirroring and exact gradients.

mod checkpoint;
mod head;
mod lstm;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::params::{same_layout, Params};
use crate::rng::RngStream;
use crate::skeleton::SkeletonSequence;

pub use checkpoint::{
    load_encoder, save_encoder, EncoderCheckpoint, CHECKPOINT_FORMAT, GATE_ORDER,
};
pub use head::{Dense, HeadKind, HeadTrace, ProjectionHead};
pub use lstm::{LayerTrace, LstmLayer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub layers: Vec<LstmLayer>,
    pub head: ProjectionHead,
}

/// Gradient tree; same layout as the parameters it belongs to.
pub type Gradients = EncoderParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderShape {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub head: HeadKind,
    pub head_dim: usize,
}

impl EncoderShape {
    pub fn new(input_dim: usize, hidden: usize, layers: usize) -> Self {
        Self {
            input_dim,
            hidden,
            layers,
            head: HeadKind::None,
            head_dim: hidden,
        }
    }

    pub fn with_head(mut self, head: HeadKind, head_dim: usize) -> Self {
        self.head = head;
        self.head_dim = head_dim;
        self
    }
}

impl EncoderParams {
    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    /// Dimension of the pooled representation, `E = H`.
    pub fn embed_dim(&self) -> usize {
        self.hidden()
    }

    /// Dimension after the projection head.
    pub fn output_dim(&self) -> usize {
        self.head.output_dim(self.hidden())
    }

    pub fn shape(&self) -> EncoderShape {
        EncoderShape {
            input_dim: self.input_dim(),
            hidden: self.hidden(),
            layers: self.layers.len(),
            head: self.head.kind(),
            head_dim: self.output_dim(),
        }
    }

    pub fn zeros(shape: &EncoderShape) -> Self {
        let layers = (0..shape.layers)
            .map(|l| {
                let d = if l == 0 {
                    shape.input_dim
                } else {
                    shape.hidden
                };
                LstmLayer::zeros(d, shape.hidden)
            })
            .collect();
        let head = match shape.head {
            HeadKind::None => ProjectionHead::None,
            HeadKind::Linear => ProjectionHead::Linear {
                layer: Dense::zeros(shape.hidden, shape.head_dim),
            },
            HeadKind::Nonlinear => ProjectionHead::Nonlinear {
                first: Dense::zeros(shape.hidden, shape.hidden),
                second: Dense::zeros(shape.hidden, shape.head_dim),
            },
        };
        Self { layers, head }
    }

    pub fn zeros_like(&self) -> Gradients {
        Self::zeros(&self.shape())
    }
}

impl Params for EncoderParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            v.push(&l.w_ih);
            v.push(&l.w_hh);
            v.push(&l.bias);
        }
        v.extend(self.head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            v.push(&mut l.w_ih);
            v.push(&mut l.w_hh);
            v.push(&mut l.bias);
        }
        v.extend(self.head.tensors_mut());
        v
    }

    fn decay_mask(&self) -> Vec<bool> {
        let mut v = Vec::new();
        for _ in &self.layers {
            v.extend([true, true, false]);
        }
        v.extend(self.head.decay_mask());
        v
    }
}

pub fn init_params(shape: &EncoderShape, rng: &mut RngStream) -> Result<EncoderParams> {
    if shape.hidden == 0 || shape.layers == 0 || shape.input_dim == 0 {
        return Err(Error::Config(format!(
            "encoder needs input_dim, hidden and layers >= 1 (got {shape:?})"
        )));
    }
    let layers = (0..shape.layers)
        .map(|l| {
            let d = if l == 0 {
                shape.input_dim
            } else {
                shape.hidden
            };
            LstmLayer::init(d, shape.hidden, rng)
        })
        .collect();
    let head = ProjectionHead::init(shape.head, shape.hidden, shape.head_dim, rng);
    Ok(EncoderParams { layers, head })
}

/// Top-layer hidden vectors, one row per time step.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenStates {
    steps: usize,
    dim: usize,
    data: Vec<f64>,
}

impl HiddenStates {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("ragged hidden-state rows".into()));
        }
        Ok(Self {
            steps: rows.len(),
            dim,
            data: rows.concat(),
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.row(self.steps - 1)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Temporal average pooling: `(1/T) * sum_t h_t`, summed in ascending `t`.
pub fn tap(h: &HiddenStates) -> Result<Vec<f64>> {
    if h.steps == 0 {
        return Err(Error::Shape("temporal pooling over zero steps".into()));
    }
    let mut acc = vec![0.0; h.dim];
    for t in 0..h.steps {
        for (a, v) in acc.iter_mut().zip(h.row(t)) {
            *a += v;
        }
    }
    let n = h.steps as f64;
    for a in &mut acc {
        *a /= n;
    }
    Ok(acc)
}

/// Everything needed to backpropagate from a representation to the parameters.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub hidden: HiddenStates,
    pub pooled: Vec<f64>,
    pub projected: Vec<f64>,
    traces: Vec<LayerTrace>,
    head_trace: HeadTrace,
}

fn check_input(params: &EncoderParams, seq: &SkeletonSequence) -> Result<()> {
    if seq.frame_dim() != params.input_dim() {
        return Err(Error::DimMismatch {
            expected: params.input_dim(),
            got: seq.frame_dim(),
        });
    }
    if seq.frames() == 0 {
        return Err(Error::Shape("sequence has no frames".into()));
    }
    Ok(())
}

fn run_layers(params: &EncoderParams, seq: &SkeletonSequence) -> Result<Vec<LayerTrace>> {
    check_input(params, seq)?;
    let steps = seq.frames();
    let mut traces: Vec<LayerTrace> = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let input = traces.last().map_or(seq.coords(), |t| &t.hidden[..]);
        let tr = layer.forward(input, steps);
        traces.push(tr);
    }
    let top = &traces.last().expect("at least one layer").hidden;
    ensure_finite(top, "encoder hidden states")?;
    Ok(traces)
}

/// Runs the stacked LSTM over every frame from zero initial state.
pub fn forward(params: &EncoderParams, seq: &SkeletonSequence) -> Result<HiddenStates> {
    let mut traces = run_layers(params, seq)?;
    let top = traces.pop().expect("at least one layer");
    Ok(HiddenStates {
        steps: seq.frames(),
        dim: params.hidden(),
        data: top.hidden,
    })
}

/// Forward, pool and project, keeping the activations for [`backprop`].
pub fn encode(params: &EncoderParams, seq: &SkeletonSequence) -> Result<Encoded> {
    let traces = run_layers(params, seq)?;
    let top = traces.last().expect("at least one layer");
    let hidden = HiddenStates {
        steps: seq.frames(),
        dim: params.hidden(),
        data: top.hidden.clone(),
    };
    let pooled = tap(&hidden)?;
    let (projected, head_trace) = params.head.project_traced(&pooled)?;
    Ok(Encoded {
        hidden,
        pooled,
        projected,
        traces,
        head_trace,
    })
}

pub fn project(head: &ProjectionHead, v: &[f64]) -> Result<Vec<f64>> {
    head.project(v)
}

/// Accumulates into `grad` the gradient of a loss whose derivative w.r.t.
/// the projected representation is `d_projected`.
pub fn backprop(params: &EncoderParams, enc: &Encoded, d_projected: &[f64], grad: &mut Gradients) {
    let d_pooled = params
        .head
        .backward(&enc.head_trace, d_projected, &mut grad.head);
    let steps = enc.hidden.steps;
    let h = params.hidden();
    let scale = 1.0 / steps as f64;
    let mut d_hidden = vec![0.0; steps * h];
    for t in 0..steps {
        for k in 0..h {
            d_hidden[t * h + k] = d_pooled[k] * scale;
        }
    }
    backprop_hidden(params, enc, d_hidden, grad);
}

/// Backpropagation from a gradient on every top-layer hidden state (`T x H`).
pub fn backprop_hidden(
    params: &EncoderParams,
    enc: &Encoded,
    d_hidden: Vec<f64>,
    grad: &mut Gradients,
) {
    let mut upstream = d_hidden;
    for l in (0..params.layers.len()).rev() {
        let need_input = l > 0;
        let out =
            params.layers[l].backward(&enc.traces[l], &upstream, &mut grad.layers[l], need_input);
        if let Some(d) = out {
            upstream = d;
        }
    }
}

/// Upstream loss over a batch of representations: returns the loss and its
/// gradient with respect to each representation.
pub type BatchLoss<'a> = dyn FnOnce(&[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> + 'a;

/// Exact gradient of `loss(project(tap(forward(params, seq_i)))_i)` over a batch.
///
/// Per-sample passes run in parallel; per-sample gradients are summed in
/// batch order, so the result does not depend on the thread count.
pub fn batch_grad(
    params: &EncoderParams,
    seqs: &[SkeletonSequence],
    loss: Box<BatchLoss<'_>>,
) -> Result<(f64, Gradients)> {
    let encoded: Vec<Encoded> = seqs
        .par_iter()
        .map(|s| encode(params, s))
        .collect::<Result<_>>()?;
    let reps: Vec<Vec<f64>> = encoded.iter().map(|e| e.projected.clone()).collect();
    let (value, upstream) = loss(&reps)?;
    let grads = backprop_batch(params, &encoded, &upstream)?;
    Ok((value, grads))
}

/// Sums per-sample backward passes in batch order.
pub fn backprop_batch(
    params: &EncoderParams,
    encoded: &[Encoded],
    upstream: &[Vec<f64>],
) -> Result<Gradients> {
    if encoded.len() != upstream.len() {
        return Err(Error::DimMismatch {
            expected: encoded.len(),
            got: upstream.len(),
        });
    }
    let parts: Vec<Gradients> = encoded
        .par_iter()
        .zip(upstream.par_iter())
        .map(|(e, d)| {
            let mut g = params.zeros_like();
            backprop(params, e, d, &mut g);
            g
        })
        .collect();
    let mut total = params.zeros_like();
    for p in &parts {
        crate::params::add_assign(&mut total, p);
    }
    if !total.is_finite() {
        return Err(Error::Divergence("non-finite encoder gradient".into()));
    }
    Ok(total)
}

/// `key <- m * key + (1 - m) * query`, elementwise.
pub fn momentum_update<P: Params>(key: &mut P, query: &P, m: f64) -> Result<()> {
    if !(0.0..1.0).contains(&m) {
        return Err(Error::Config(format!("momentum {m} must lie in [0, 1)")));
    }
    same_layout(key, query)?;
    for (k, q) in key.tensors_mut().into_iter().zip(query.tensors()) {
        for (a, b) in k.iter_mut().zip(q) {
            *a = m * *a + (1.0 - m) * b;
        }
    }
    Ok(())
}

/// Pooled query-encoder representation of an (un-augmented) sequence.
pub fn cae(params_q: &EncoderParams, seq: &SkeletonSequence) -> Result<Vec<f64>> {
    tap(&forward(params_q, seq)?)
}

/// Query and key pooled representations, concatenated (dimension `2E`).
pub fn cae_plus(
    params_q: &EncoderParams,
    params_k: &EncoderParams,
    seq: &SkeletonSequence,
) -> Result<Vec<f64>> {
    let mut v = cae(params_q, seq)?;
    v.extend(tap(&forward(params_k, seq)?)?);
    Ok(v)
}
