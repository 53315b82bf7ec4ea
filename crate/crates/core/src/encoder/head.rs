//! Optional projection heads mapping pooled representations into the
//! contrastive space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    #[default]
    None,
    Linear,
    Nonlinear,
}

impl std::str::FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(HeadKind::None),
            "linear" => Ok(HeadKind::Linear),
            "nonlinear" | "mlp" => Ok(HeadKind::Nonlinear),
            other => Err(Error::Config(format!("unknown projection head '{other}'"))),
        }
    }
}

/// Dense layer `y = W x + b`, `W` row-major `out x in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            input,
            output,
            weight: vec![0.0; input * output],
            bias: vec![0.0; output],
        }
    }

    pub fn init(input: usize, output: usize, rng: &mut RngStream) -> Self {
        let mut d = Self::zeros(input, output);
        let bound = 1.0 / (input as f64).sqrt();
        for w in &mut d.weight {
            *w = rng.uniform_in(-bound, bound);
        }
        d
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.output)
            .map(|r| {
                let row = &self.weight[r * self.input..(r + 1) * self.input];
                self.bias[r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.input];
        for r in 0..self.output {
            let g = dy[r];
            grad.bias[r] += g;
            let row = &self.weight[r * self.input..(r + 1) * self.input];
            let grow = &mut grad.weight[r * self.input..(r + 1) * self.input];
            for k in 0..self.input {
                grow[k] += g * x[k];
                dx[k] += g * row[k];
            }
        }
        dx
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProjectionHead {
    None,
    Linear {
        layer: Dense,
    },
    /// Dense, rectifier, dense. The hidden width equals the input width.
    Nonlinear {
        first: Dense,
        second: Dense,
    },
}

/// Activations needed to backpropagate through a head.
#[derive(Clone, Debug)]
pub struct HeadTrace {
    input: Vec<f64>,
    pre_activation: Vec<f64>,
    activation: Vec<f64>,
}

impl ProjectionHead {
    pub fn init(kind: HeadKind, input: usize, output: usize, rng: &mut RngStream) -> Self {
        match kind {
            HeadKind::None => ProjectionHead::None,
            HeadKind::Linear => ProjectionHead::Linear {
                layer: Dense::init(input, output, rng),
            },
            HeadKind::Nonlinear => ProjectionHead::Nonlinear {
                first: Dense::init(input, input, rng),
                second: Dense::init(input, output, rng),
            },
        }
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            ProjectionHead::None => HeadKind::None,
            ProjectionHead::Linear { .. } => HeadKind::Linear,
            ProjectionHead::Nonlinear { .. } => HeadKind::Nonlinear,
        }
    }

    pub fn input_dim(&self) -> Option<usize> {
        match self {
            ProjectionHead::None => None,
            ProjectionHead::Linear { layer } => Some(layer.input),
            ProjectionHead::Nonlinear { first, .. } => Some(first.input),
        }
    }

    pub fn output_dim(&self, input: usize) -> usize {
        match self {
            ProjectionHead::None => input,
            ProjectionHead::Linear { layer } => layer.output,
            ProjectionHead::Nonlinear { second, .. } => second.output,
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            ProjectionHead::None => ProjectionHead::None,
            ProjectionHead::Linear { layer } => ProjectionHead::Linear {
                layer: Dense::zeros(layer.input, layer.output),
            },
            ProjectionHead::Nonlinear { first, second } => ProjectionHead::Nonlinear {
                first: Dense::zeros(first.input, first.output),
                second: Dense::zeros(second.input, second.output),
            },
        }
    }

    pub(crate) fn tensors(&self) -> Vec<&[f64]> {
        match self {
            ProjectionHead::None => vec![],
            ProjectionHead::Linear { layer } => vec![&layer.weight, &layer.bias],
            ProjectionHead::Nonlinear { first, second } => {
                vec![&first.weight, &first.bias, &second.weight, &second.bias]
            }
        }
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            ProjectionHead::None => vec![],
            ProjectionHead::Linear { layer } => vec![&mut layer.weight, &mut layer.bias],
            ProjectionHead::Nonlinear { first, second } => vec![
                &mut first.weight,
                &mut first.bias,
                &mut second.weight,
                &mut second.bias,
            ],
        }
    }

    pub(crate) fn decay_mask(&self) -> Vec<bool> {
        match self {
            ProjectionHead::None => vec![],
            ProjectionHead::Linear { .. } => vec![true, false],
            ProjectionHead::Nonlinear { .. } => vec![true, false, true, false],
        }
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.project_traced(v)?.0)
    }

    pub fn project_traced(&self, v: &[f64]) -> Result<(Vec<f64>, HeadTrace)> {
        if let Some(d) = self.input_dim() {
            if d != v.len() {
                return Err(Error::DimMismatch {
                    expected: d,
                    got: v.len(),
                });
            }
        }
        let mut trace = HeadTrace {
            input: v.to_vec(),
            pre_activation: Vec::new(),
            activation: Vec::new(),
        };
        let out = match self {
            ProjectionHead::None => v.to_vec(),
            ProjectionHead::Linear { layer } => layer.forward(v),
            ProjectionHead::Nonlinear { first, second } => {
                let a = first.forward(v);
                let r: Vec<f64> = a.iter().map(|&x| x.max(0.0)).collect();
                let y = second.forward(&r);
                trace.pre_activation = a;
                trace.activation = r;
                y
            }
        };
        Ok((out, trace))
    }

    /// Accumulates head gradients into `grad` and returns `dL/dv`.
    pub fn backward(&self, trace: &HeadTrace, dy: &[f64], grad: &mut ProjectionHead) -> Vec<f64> {
        match (self, grad) {
            (ProjectionHead::None, _) => dy.to_vec(),
            (ProjectionHead::Linear { layer }, ProjectionHead::Linear { layer: g }) => {
                layer.backward(&trace.input, dy, g)
            }
            (
                ProjectionHead::Nonlinear { first, second },
                ProjectionHead::Nonlinear {
                    first: g1,
                    second: g2,
                },
            ) => {
                let dr = second.backward(&trace.activation, dy, g2);
                let da: Vec<f64> = dr
                    .iter()
                    .zip(&trace.pre_activation)
                    .map(|(&d, &a)| if a > 0.0 { d } else { 0.0 })
                    .collect();
                first.backward(&trace.input, &da, g1)
            }
            _ => panic!("gradient head layout does not match parameters"),
        }
    }
}
