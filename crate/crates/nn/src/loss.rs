use crate::error::{invalid, mismatch, Result};
use crate::tensor::Tensor;

/// Max-subtracted softmax over the last axis.
pub fn softmax(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    let cols = *logits.shape().last().unwrap();
    for row in out.data_mut().chunks_mut(cols) {
        softmax_in_place(row);
    }
    out
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

#[derive(Debug, Clone)]
pub struct CrossEntropy {
    pub loss: f64,
    pub probs: Tensor,
    /// `probs - onehot(label)`.
    pub grad_logits: Tensor,
}

fn row_loss(logits: &[f64], label: usize, probs: &mut [f64], grad: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    for (j, (p, g)) in probs.iter_mut().zip(grad.iter_mut()).enumerate() {
        *p = (logits[j] - max - log_sum).exp();
        *g = *p - if j == label { 1.0 } else { 0.0 };
    }
    log_sum - (logits[label] - max)
}

pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<CrossEntropy> {
    let [classes] = *logits.shape() else {
        return Err(mismatch("softmax_cross_entropy", "logits [C]", format!("{:?}", logits.shape())));
    };
    if classes < 2 {
        return Err(invalid("softmax_cross_entropy", "need at least two classes"));
    }
    if label >= classes {
        return Err(invalid(
            "softmax_cross_entropy",
            format!("label {label} out of range for {classes} classes"),
        ));
    }
    let mut probs = Tensor::zeros(&[classes]);
    let mut grad = Tensor::zeros(&[classes]);
    let loss = row_loss(logits.data(), label, probs.data_mut(), grad.data_mut());
    Ok(CrossEntropy {
        loss,
        probs,
        grad_logits: grad,
    })
}

/// Row-wise cross-entropy over `[B, C]` logits. Returns per-row losses; the
/// gradient rows are unscaled.
pub fn softmax_cross_entropy_batch(logits: &Tensor, labels: &[usize]) -> Result<(Vec<f64>, Tensor, Tensor)> {
    let [rows, classes] = *logits.shape() else {
        return Err(mismatch("softmax_cross_entropy", "logits [B, C]", format!("{:?}", logits.shape())));
    };
    if labels.len() != rows {
        return Err(mismatch("softmax_cross_entropy", format!("{rows} labels"), format!("{}", labels.len())));
    }
    if classes < 2 {
        return Err(invalid("softmax_cross_entropy", "need at least two classes"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(invalid(
            "softmax_cross_entropy",
            format!("label {bad} out of range for {classes} classes"),
        ));
    }
    let mut probs = Tensor::zeros(logits.shape());
    let mut grad = Tensor::zeros(logits.shape());
    let mut losses = Vec::with_capacity(rows);
    for (r, &label) in labels.iter().enumerate() {
        let l = row_loss(
            logits.row(r),
            label,
            &mut probs.data_mut()[r * classes..(r + 1) * classes],
            &mut grad.data_mut()[r * classes..(r + 1) * classes],
        );
        losses.push(l);
    }
    Ok((losses, probs, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_c() {
        let ce = softmax_cross_entropy(&Tensor::filled(&[4], 0.7), 2).unwrap();
        assert!((ce.loss - 4f64.ln()).abs() < 1e-12);
        assert!((ce.loss - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn saturated_correct_class() {
        let logits = Tensor::vector(&[0.0, 50.0, 0.0]);
        let ce = softmax_cross_entropy(&logits, 1).unwrap();
        assert!(ce.loss < 1e-9);
    }

    #[test]
    fn probs_sum_to_one_even_for_large_logits() {
        let logits = Tensor::vector(&[1000.0, -1000.0, 999.0, 3.0]);
        let ce = softmax_cross_entropy(&logits, 0).unwrap();
        let s: f64 = ce.probs.data().iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
        assert!(ce.loss.is_finite());
    }

    #[test]
    fn label_out_of_range_rejected() {
        assert!(softmax_cross_entropy(&Tensor::zeros(&[3]), 3).is_err());
        assert!(softmax_cross_entropy(&Tensor::zeros(&[1]), 0).is_err());
        assert!(softmax_cross_entropy_batch(&Tensor::zeros(&[2, 3]), &[0, 5]).is_err());
    }

    #[test]
    fn batch_matches_single() {
        let logits = Tensor::from_fn(&[3, 4], |i| (i as f64 * 1.7).sin() * 3.0);
        let labels = [0, 3, 1];
        let (losses, probs, grad) = softmax_cross_entropy_batch(&logits, &labels).unwrap();
        for r in 0..3 {
            let single = softmax_cross_entropy(&Tensor::vector(logits.row(r)), labels[r]).unwrap();
            assert!((single.loss - losses[r]).abs() < 1e-14);
            assert_eq!(single.probs.data(), probs.row(r));
            assert_eq!(single.grad_logits.data(), grad.row(r));
        }
    }
}
