use serde::{Deserialize, Serialize};

use super::LinearClassifier;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub top1: f64,
    /// Top-5, or Top-c when there are fewer than five classes.
    pub top5: f64,
    /// Accuracy per true class; 0 for classes absent from the split.
    pub per_class: Vec<f64>,
    pub support: Vec<usize>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Position of the true class when classes are sorted by descending score,
/// ties ranked by lower index first.
fn rank_of(scores: &[f64], y: usize) -> usize {
    let sy = scores[y];
    scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s > sy || (s == sy && j < y))
        .count()
}

/// Fraction of rows whose true label is among the `k` best scores.
pub fn top_k(scores: &[Vec<f64>], labels: &[usize], k: usize) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut hits = 0usize;
    for (s, &y) in scores.iter().zip(labels) {
        if k == 0 || k > s.len() {
            return Err(Error::Config(format!(
                "k = {k} must lie in 1..={}",
                s.len()
            )));
        }
        if y >= s.len() {
            return Err(Error::IndexOutOfRange {
                index: y,
                len: s.len(),
            });
        }
        if rank_of(s, y) < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / scores.len() as f64)
}

pub fn metrics_from_scores(
    scores: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
) -> Result<Metrics> {
    if scores.iter().any(|s| s.len() != classes) {
        return Err(Error::Shape(format!(
            "score rows must have {classes} entries"
        )));
    }
    let top1 = top_k(scores, labels, 1)?;
    let top5 = top_k(scores, labels, classes.min(5))?;
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (s, &y) in scores.iter().zip(labels) {
        let pred = (0..classes)
            .find(|&c| rank_of(s, c) == 0)
            .expect("some class ranks first");
        confusion[y][pred] += 1;
    }
    let support: Vec<usize> = confusion.iter().map(|row| row.iter().sum()).collect();
    let per_class = (0..classes)
        .map(|c| {
            if support[c] == 0 {
                0.0
            } else {
                confusion[c][c] as f64 / support[c] as f64
            }
        })
        .collect();
    Ok(Metrics {
        top1,
        top5,
        per_class,
        support,
        confusion,
    })
}

pub fn evaluate(clf: &LinearClassifier, feats: &[Vec<f64>], labels: &[usize]) -> Result<Metrics> {
    let scores: Vec<Vec<f64>> = feats.iter().map(|x| clf.scores(x)).collect();
    metrics_from_scores(&scores, labels, clf.classes)
}
