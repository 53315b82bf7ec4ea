//! LSTM layer recurrence and its exact backward pass through time.
//!
//! Gate rows are stacked as (input, forget, cell, output), each block `H` rows:
//!
//! ```text
//! z_t = W_ih x_t + W_hh h_{t-1} + b
//! i = sigmoid(z_i)  f = sigmoid(z_f)  g = tanh(z_g)  o = sigmoid(z_o)
//! c_t = f * c_{t-1} + i * g
//! h_t = o * tanh(c_t)
//! ```

use serde::{Deserialize, Serialize};

use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub input_dim: usize,
    pub hidden: usize,
    /// `4H x D`, row-major.
    pub w_ih: Vec<f64>,
    /// `4H x H`, row-major.
    pub w_hh: Vec<f64>,
    /// `4H`.
    pub bias: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Per-step activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LayerTrace {
    pub input: Vec<f64>,
    /// `T x 4H` post-activation gates.
    pub gates: Vec<f64>,
    pub cell: Vec<f64>,
    pub tanh_cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl LstmLayer {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            hidden,
            w_ih: vec![0.0; 4 * hidden * input_dim],
            w_hh: vec![0.0; 4 * hidden * hidden],
            bias: vec![0.0; 4 * hidden],
        }
    }

    /// Weights uniform in `[-1/sqrt(H), 1/sqrt(H)]`, biases zero except forget = 1.
    pub fn init(input_dim: usize, hidden: usize, rng: &mut RngStream) -> Self {
        let mut layer = Self::zeros(input_dim, hidden);
        let bound = 1.0 / (hidden as f64).sqrt();
        for w in layer.w_ih.iter_mut().chain(layer.w_hh.iter_mut()) {
            *w = rng.uniform_in(-bound, bound);
        }
        for b in &mut layer.bias[hidden..2 * hidden] {
            *b = 1.0;
        }
        layer
    }

    /// Runs the recurrence over `steps` rows of `input` from zero state.
    pub fn forward(&self, input: &[f64], steps: usize) -> LayerTrace {
        let (d, h) = (self.input_dim, self.hidden);
        debug_assert_eq!(input.len(), steps * d);
        let mut gates = vec![0.0; steps * 4 * h];
        let mut cell = vec![0.0; steps * h];
        let mut tanh_cell = vec![0.0; steps * h];
        let mut hidden = vec![0.0; steps * h];
        let mut z = vec![0.0; 4 * h];
        let zero = vec![0.0; h];
        for t in 0..steps {
            let x = &input[t * d..(t + 1) * d];
            let (h_prev, c_prev) = if t == 0 {
                (&zero[..], &zero[..])
            } else {
                (&hidden[(t - 1) * h..t * h], &cell[(t - 1) * h..t * h])
            };
            for r in 0..4 * h {
                z[r] = self.bias[r]
                    + dot(&self.w_ih[r * d..(r + 1) * d], x)
                    + dot(&self.w_hh[r * h..(r + 1) * h], h_prev);
            }
            let g_row = &mut gates[t * 4 * h..(t + 1) * 4 * h];
            for k in 0..h {
                g_row[k] = sigmoid(z[k]);
                g_row[h + k] = sigmoid(z[h + k]);
                g_row[2 * h + k] = z[2 * h + k].tanh();
                g_row[3 * h + k] = sigmoid(z[3 * h + k]);
            }
            let mut c_new = vec![0.0; h];
            for k in 0..h {
                c_new[k] = g_row[h + k] * c_prev[k] + g_row[k] * g_row[2 * h + k];
            }
            for k in 0..h {
                let tc = c_new[k].tanh();
                tanh_cell[t * h + k] = tc;
                hidden[t * h + k] = g_row[3 * h + k] * tc;
            }
            cell[t * h..(t + 1) * h].copy_from_slice(&c_new);
        }
        LayerTrace {
            input: input.to_vec(),
            gates,
            cell,
            tanh_cell,
            hidden,
        }
    }

    /// Backpropagates `d_hidden` (`T x H`, gradient of the loss w.r.t. every
    /// output step) through time, accumulating into `grad`. When `input_grad`
    /// is set, also returns the gradient w.r.t. the layer input (`T x D`).
    pub fn backward(
        &self,
        trace: &LayerTrace,
        d_hidden: &[f64],
        grad: &mut LstmLayer,
        input_grad: bool,
    ) -> Option<Vec<f64>> {
        let (d, h) = (self.input_dim, self.hidden);
        let steps = trace.hidden.len() / h;
        let mut d_input = if input_grad {
            vec![0.0; steps * d]
        } else {
            Vec::new()
        };
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        let zero = vec![0.0; h];
        for t in (0..steps).rev() {
            let g = &trace.gates[t * 4 * h..(t + 1) * 4 * h];
            let tc = &trace.tanh_cell[t * h..(t + 1) * h];
            let c_prev = if t == 0 {
                &zero[..]
            } else {
                &trace.cell[(t - 1) * h..t * h]
            };
            for k in 0..h {
                let (ig, fg, cg, og) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                let dh = d_hidden[t * h + k] + dh_next[k];
                let d_o = dh * tc[k];
                let dc = dh * og * (1.0 - tc[k] * tc[k]) + dc_next[k];
                let d_i = dc * cg;
                let d_g = dc * ig;
                let d_f = dc * c_prev[k];
                dc_next[k] = dc * fg;
                dz[k] = d_i * ig * (1.0 - ig);
                dz[h + k] = d_f * fg * (1.0 - fg);
                dz[2 * h + k] = d_g * (1.0 - cg * cg);
                dz[3 * h + k] = d_o * og * (1.0 - og);
            }
            let x = &trace.input[t * d..(t + 1) * d];
            let h_prev = if t == 0 {
                &zero[..]
            } else {
                &trace.hidden[(t - 1) * h..t * h]
            };
            dh_next.fill(0.0);
            for r in 0..4 * h {
                let dzr = dz[r];
                if dzr == 0.0 {
                    continue;
                }
                grad.bias[r] += dzr;
                axpy(dzr, x, &mut grad.w_ih[r * d..(r + 1) * d]);
                axpy(dzr, h_prev, &mut grad.w_hh[r * h..(r + 1) * h]);
                if input_grad {
                    axpy(
                        dzr,
                        &self.w_ih[r * d..(r + 1) * d],
                        &mut d_input[t * d..(t + 1) * d],
                    );
                }
                axpy(dzr, &self.w_hh[r * h..(r + 1) * h], &mut dh_next);
            }
        }
        input_grad.then_some(d_input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_give_zero_hidden() {
        let layer = LstmLayer::zeros(3, 4);
        let input: Vec<f64> = (0..15).map(|i| i as f64 - 7.0).collect();
        let tr = layer.forward(&input, 5);
        assert!(tr.hidden.iter().all(|&v| v == 0.0));
    }

    /// Scalar reference cell evaluated step by step.
    fn scalar_cell(bias: [f64; 4], steps: usize) -> Vec<f64> {
        let (mut c, mut out) = (0.0f64, Vec::new());
        for _ in 0..steps {
            let i = 1.0 / (1.0 + (-bias[0]).exp());
            let f = 1.0 / (1.0 + (-bias[1]).exp());
            let g = bias[2].tanh();
            let o = 1.0 / (1.0 + (-bias[3]).exp());
            c = f * c + i * g;
            out.push(o * c.tanh());
        }
        out
    }

    #[test]
    fn bias_only_cell_matches_scalar_reference() {
        let mut layer = LstmLayer::zeros(2, 1);
        let bias = [0.3, 1.0, 0.8, -0.2];
        layer.bias.copy_from_slice(&bias);
        let tr = layer.forward(&[0.0; 12], 6);
        let expect = scalar_cell(bias, 6);
        for (a, b) in tr.hidden.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn causal_prefix() {
        let mut rng = RngStream::new(3);
        let layer = LstmLayer::init(2, 3, &mut rng);
        let a: Vec<f64> = (0..8).map(|i| (i as f64).cos()).collect();
        let mut b = a.clone();
        b.extend_from_slice(&a);
        let ta = layer.forward(&a, 4);
        let tb = layer.forward(&b, 8);
        assert_eq!(ta.hidden[..], tb.hidden[..12]);
    }
}
