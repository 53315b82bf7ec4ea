//! InfoNCE over raw dot products, evaluated with max-logit subtraction.

use crate::error::{Error, Result};

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dims<N: AsRef<[f64]>>(q: &[f64], pos: &[f64], negatives: &[N], tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Config(format!(
            "temperature must be > 0 (got {tau})"
        )));
    }
    if pos.len() != q.len() {
        return Err(Error::DimMismatch {
            expected: q.len(),
            got: pos.len(),
        });
    }
    for n in negatives {
        if n.as_ref().len() != q.len() {
            return Err(Error::DimMismatch {
                expected: q.len(),
                got: n.as_ref().len(),
            });
        }
    }
    Ok(())
}

/// `-log softmax(logits)[0]`, plus the softmax probabilities.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Divergence("non-finite logit".into()));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[target] - max);
    let probs = exps.into_iter().map(|e| e / sum).collect();
    Ok((loss, probs))
}

/// Logits `[q.k+ / tau, q.k-_1 / tau, ...]`, positive first.
pub fn contrastive_logits<N: AsRef<[f64]>>(
    q: &[f64],
    pos: &[f64],
    negatives: &[N],
    tau: f64,
) -> Vec<f64> {
    std::iter::once(dot(q, pos) / tau)
        .chain(negatives.iter().map(|n| dot(q, n.as_ref()) / tau))
        .collect()
}

/// Single-query InfoNCE loss.
pub fn info_nce<N: AsRef<[f64]>>(q: &[f64], pos: &[f64], negatives: &[N], tau: f64) -> Result<f64> {
    check_dims(q, pos, negatives, tau)?;
    let logits = contrastive_logits(q, pos, negatives, tau);
    Ok(softmax_cross_entropy(&logits, 0)?.0)
}

#[derive(Clone, Debug)]
pub struct InfoNceGrad {
    pub loss: f64,
    pub d_query: Vec<f64>,
    pub d_positive: Vec<f64>,
    /// Empty unless key gradients were requested.
    pub d_negatives: Vec<Vec<f64>>,
}

/// InfoNCE with its gradient w.r.t. the query, and optionally the keys.
pub fn info_nce_grad<N: AsRef<[f64]>>(
    q: &[f64],
    pos: &[f64],
    negatives: &[N],
    tau: f64,
    key_grads: bool,
) -> Result<InfoNceGrad> {
    check_dims(q, pos, negatives, tau)?;
    let logits = contrastive_logits(q, pos, negatives, tau);
    let (loss, probs) = softmax_cross_entropy(&logits, 0)?;
    let e = q.len();
    let mut d_query = vec![0.0; e];
    let c0 = (probs[0] - 1.0) / tau;
    for (d, k) in d_query.iter_mut().zip(pos) {
        *d += c0 * k;
    }
    for (p, n) in probs[1..].iter().zip(negatives) {
        let c = p / tau;
        for (d, k) in d_query.iter_mut().zip(n.as_ref()) {
            *d += c * k;
        }
    }
    let (d_positive, d_negatives) = if key_grads {
        (
            q.iter().map(|x| c0 * x).collect(),
            probs[1..]
                .iter()
                .map(|p| q.iter().map(|x| p / tau * x).collect())
                .collect(),
        )
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(InfoNceGrad {
        loss,
        d_query,
        d_positive,
        d_negatives,
    })
}

/// Mean InfoNCE over a batch that shares one negative set (the queue case).
/// Returns the mean loss and `dL/dq_i` for every query.
pub fn batch_info_nce<K: AsRef<[f64]>, N: AsRef<[f64]> + Sync>(
    queries: &[Vec<f64>],
    positives: &[K],
    negatives: &[N],
    tau: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if queries.len() != positives.len() || queries.is_empty() {
        return Err(Error::DimMismatch {
            expected: queries.len(),
            got: positives.len(),
        });
    }
    let n = queries.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(queries.len());
    for (q, k) in queries.iter().zip(positives) {
        let g = info_nce_grad(q, k.as_ref(), negatives, tau, false)?;
        total += g.loss;
        grads.push(g.d_query.into_iter().map(|v| v / n).collect());
    }
    Ok((total / n, grads))
}

/// Mean in-batch InfoNCE: key `i` is the positive for query `i` and the other
/// `n - 1` keys are its negatives. Returns loss, `dL/dq_i` and `dL/dk_j`.
pub fn in_batch_info_nce(
    queries: &[Vec<f64>],
    keys: &[Vec<f64>],
    tau: f64,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let n = queries.len();
    if n < 2 {
        return Err(Error::Config(
            "in-batch contrast needs at least 2 samples".into(),
        ));
    }
    if keys.len() != n {
        return Err(Error::DimMismatch {
            expected: n,
            got: keys.len(),
        });
    }
    let e = queries[0].len();
    let scale = 1.0 / n as f64;
    let mut total = 0.0;
    let mut dq = Vec::with_capacity(n);
    let mut dk = vec![vec![0.0; e]; n];
    for i in 0..n {
        let others: Vec<&[f64]> = (0..n)
            .filter(|&j| j != i)
            .map(|j| keys[j].as_slice())
            .collect();
        let g = info_nce_grad(&queries[i], &keys[i], &others, tau, true)?;
        total += g.loss;
        dq.push(g.d_query.iter().map(|v| v * scale).collect());
        for (a, b) in dk[i].iter_mut().zip(&g.d_positive) {
            *a += b * scale;
        }
        let mut slot = 0;
        for (j, row) in dk.iter_mut().enumerate() {
            if j == i {
                continue;
            }
            for (a, b) in row.iter_mut().zip(&g.d_negatives[slot]) {
                *a += b * scale;
            }
            slot += 1;
        }
    }
    Ok((total * scale, dq, dk))
}

pub fn l2_normalize(v: &[f64]) -> Vec<f64> {
    let n = dot(v, v).sqrt().max(1e-12);
    v.iter().map(|x| x / n).collect()
}

/// Backward of [`l2_normalize`]: maps `dL/dy` to `dL/dx`.
pub fn l2_normalize_backward(x: &[f64], dy: &[f64]) -> Vec<f64> {
    let n = dot(x, x).sqrt().max(1e-12);
    let y: Vec<f64> = x.iter().map(|v| v / n).collect();
    let proj = dot(&y, dy);
    dy.iter()
        .zip(&y)
        .map(|(d, yi)| (d - yi * proj) / n)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits() {
        let q = vec![0.0, 0.0];
        let negs = vec![vec![1.0, 2.0]; 3];
        let l = info_nce(&q, &[3.0, 4.0], &negs, 0.06).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        assert!((l - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_temperature_and_dims() {
        let q = [1.0, 0.0];
        let negs: Vec<Vec<f64>> = vec![vec![0.0, 1.0]];
        assert!(info_nce(&q, &q, &negs, 0.0).is_err());
        assert!(info_nce(&q, &[1.0], &negs, 0.1).is_err());
        assert!(info_nce(&q, &q, &[vec![1.0, 2.0, 3.0]], 0.1).is_err());
    }

    #[test]
    fn nonnegative_and_vanishing() {
        let negs = vec![vec![-1.0, 0.0], vec![0.0, -1.0]];
        let near = info_nce(&[1.0, 1.0], &[1.0, 1.0], &negs, 1e-3).unwrap();
        assert!((0.0..1e-12).contains(&near));
    }

    #[test]
    fn huge_logits_stay_finite() {
        let q = vec![30.0; 4];
        let negs = vec![vec![29.0; 4]; 5];
        let l = info_nce(&q, &[30.0; 4], &negs, 0.01).unwrap();
        assert!(l.is_finite());
    }

    #[test]
    fn normalize_backward_matches_differences() {
        let x = [0.3, -1.2, 0.5];
        let dy = [0.7, 0.1, -0.4];
        let g = l2_normalize_backward(&x, &dy);
        let f = |x: &[f64]| dot(&l2_normalize(x), &dy);
        for i in 0..3 {
            let mut a = x;
            let mut b = x;
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (f(&a) - f(&b)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }
}
