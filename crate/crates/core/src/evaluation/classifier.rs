use serde::{Deserialize, Serialize};

use super::EvalConfig;
use crate::contrastive::softmax_cross_entropy;
use crate::error::{Error, Result};
use crate::params::Params;
use crate::rng::RngStream;
use crate::trainer::{sgd_step, SgdState};

/// Softmax-regression head `scores = W x + b`, `W` row-major `classes x dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub classes: usize,
    pub dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearClassifier {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            weight: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
        }
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|c| {
                let row = &self.weight[c * self.dim..(c + 1) * self.dim];
                self.bias[c] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    /// Highest-scoring class; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let s = self.scores(x);
        let mut best = 0;
        for c in 1..s.len() {
            if s[c] > s[best] {
                best = c;
            }
        }
        best
    }
}

impl Params for LinearClassifier {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.weight, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn decay_mask(&self) -> Vec<bool> {
        vec![true, false]
    }
}

fn check_inputs(clf: &LinearClassifier, feats: &[Vec<f64>], labels: &[usize]) -> Result<()> {
    if feats.len() != labels.len() {
        return Err(Error::DimMismatch {
            expected: feats.len(),
            got: labels.len(),
        });
    }
    if feats.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(f) = feats.iter().find(|f| f.len() != clf.dim) {
        return Err(Error::DimMismatch {
            expected: clf.dim,
            got: f.len(),
        });
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= clf.classes) {
        return Err(Error::IndexOutOfRange {
            index: y,
            len: clf.classes,
        });
    }
    Ok(())
}

/// Mean cross-entropy, its parameter gradient, and the gradient w.r.t. each input row.
pub fn classifier_loss_input_grad(
    clf: &LinearClassifier,
    feats: &[Vec<f64>],
    labels: &[usize],
) -> Result<(f64, LinearClassifier, Vec<Vec<f64>>)> {
    check_inputs(clf, feats, labels)?;
    let n = feats.len() as f64;
    let d = clf.dim;
    let mut grad = LinearClassifier::zeros(clf.classes, d);
    let mut d_inputs = Vec::with_capacity(feats.len());
    let mut total = 0.0;
    for (x, &y) in feats.iter().zip(labels) {
        let (loss, mut p) = softmax_cross_entropy(&clf.scores(x), y)?;
        total += loss;
        p[y] -= 1.0;
        let mut dx = vec![0.0; d];
        for (c, &pc) in p.iter().enumerate() {
            let dz = pc / n;
            grad.bias[c] += dz;
            let row = c * d..(c + 1) * d;
            for ((g, w), (xi, dxi)) in grad.weight[row.clone()]
                .iter_mut()
                .zip(&clf.weight[row])
                .zip(x.iter().zip(dx.iter_mut()))
            {
                *g += dz * xi;
                *dxi += dz * w;
            }
        }
        d_inputs.push(dx);
    }
    Ok((total / n, grad, d_inputs))
}

/// Mean softmax cross-entropy over `feats` and its gradient.
pub fn classifier_loss_grad(
    clf: &LinearClassifier,
    feats: &[Vec<f64>],
    labels: &[usize],
) -> Result<(f64, LinearClassifier)> {
    let (loss, grad, _) = classifier_loss_input_grad(clf, feats, labels)?;
    Ok((loss, grad))
}

/// Trains a zero-initialized classifier on fixed features with the
/// evaluation schedule. Partial final batches are kept.
pub fn train_linear(
    feats: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<LinearClassifier> {
    let dim = feats.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
    let mut clf = LinearClassifier::zeros(classes, dim);
    check_inputs(&clf, feats, labels)?;
    let mut state = SgdState::new(&clf);
    let root = RngStream::new(seed);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let perm = root.derive(&[epoch as u64]).permutation(feats.len());
        for chunk in perm.chunks(cfg.batch_size) {
            let x: Vec<Vec<f64>> = chunk.iter().map(|&i| feats[i].clone()).collect();
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grad) = classifier_loss_grad(&clf, &x, &y)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "classifier loss {loss} at epoch {epoch}"
                )));
            }
            sgd_step(&mut clf, &grad, &mut state, lr, &cfg.sgd)?;
        }
    }
    Ok(clf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_toy_is_fit_exactly() {
        let mut rng = RngStream::new(5);
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let y = i % 2;
            let sign = if y == 0 { -1.0 } else { 1.0 };
            feats.push(vec![
                sign * rng.uniform_in(0.2, 1.0),
                rng.uniform_in(-1.0, 1.0),
            ]);
            labels.push(y);
        }
        let clf = train_linear(&feats, &labels, 2, &EvalConfig::default(), 3).unwrap();
        let correct = feats
            .iter()
            .zip(&labels)
            .filter(|(x, &y)| clf.predict(x) == y)
            .count();
        assert_eq!(correct, 60);
    }

    #[test]
    fn rejects_bad_labels() {
        let clf = LinearClassifier::zeros(2, 1);
        assert!(classifier_loss_grad(&clf, &[vec![0.0]], &[2]).is_err());
        assert!(classifier_loss_grad(&clf, &[vec![0.0, 1.0]], &[0]).is_err());
    }

    #[test]
    fn zero_classifier_loss_is_log_c() {
        let clf = LinearClassifier::zeros(4, 3);
        let (l, _) = classifier_loss_grad(&clf, &[vec![1.0, 2.0, 3.0]], &[1]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
    }
}
