use alloc::format;
use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};
use crate::Tensor;

/// Result of [`softmax_cross_entropy`].
#[derive(Debug, Clone)]
pub struct SoftmaxCrossEntropy {
    /// Mean negative log-likelihood over the batch.
    pub loss: f32,
    pub probs: Tensor,
    /// `(probs − onehot) / n`.
    pub grad_logits: Tensor,
}

pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<SoftmaxCrossEntropy> {
    let (n, k) = logits.dims2()?;
    if labels.len() != n {
        return dim_err("softmax_cross_entropy", format!("{} labels for {n} rows", labels.len()));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    let mut probs = Vec::with_capacity(n * k);
    let mut grad = Vec::with_capacity(n * k);
    let mut nll = 0.0f64;
    for (row, &label) in logits.data().chunks_exact(k).zip(labels) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let exps: Vec<f64> = row.iter().map(|&z| libm::exp((z - max) as f64)).collect();
        let total: f64 = exps.iter().sum();
        nll += crate::math::ln(total) - (row[label] - max) as f64;
        for (j, e) in exps.iter().enumerate() {
            let p = (e / total) as f32;
            probs.push(p);
            let onehot = if j == label { 1.0 } else { 0.0 };
            grad.push((p - onehot) / n as f32);
        }
    }
    Ok(SoftmaxCrossEntropy {
        loss: (nll / n as f64) as f32,
        probs: Tensor::new(logits.shape().to_vec(), probs)?,
        grad_logits: Tensor::new(logits.shape().to_vec(), grad)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_logits_are_uniform() {
        let out = softmax_cross_entropy(&Tensor::full(&[2, 10], 0.3), &[0, 7]).unwrap();
        assert!(out.probs.data().iter().all(|&p| (p - 0.1).abs() < 1e-7));
        assert!((out.loss - core::f32::consts::LN_10).abs() < 1e-5);
    }

    #[test]
    fn dominant_logit() {
        let mut logits = Tensor::zeros(&[1, 10]);
        logits.data_mut()[3] = 1e4;
        let out = softmax_cross_entropy(&logits, &[3]).unwrap();
        assert!((out.probs.data()[3] - 1.0).abs() < 1e-7);
        assert!(out.loss.abs() < 1e-6);
        let wrong = softmax_cross_entropy(&logits, &[4]).unwrap();
        assert!((wrong.loss - 1e4).abs() < 1.0);
        assert!(wrong.loss.is_finite());
    }

    #[test]
    fn rows_sum_to_one() {
        let logits = Tensor::from_fn(&[4, 5], |i| (i as f32 * 0.7).sin() * 3.0);
        let out = softmax_cross_entropy(&logits, &[0, 1, 2, 3]).unwrap();
        for row in out.probs.data().chunks(5) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn label_out_of_range() {
        let err = softmax_cross_entropy(&Tensor::zeros(&[1, 10]), &[10]).unwrap_err();
        assert_eq!(err, Error::LabelOutOfRange { label: 10, classes: 10 });
    }
}
