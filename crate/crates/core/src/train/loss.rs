use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Numerically stable softmax of one logit row.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax cross-entropy of every step against the sequence label, averaged over steps.
///
/// Returns the loss and `d loss / d logits = (softmax - onehot) / T`.
pub fn cross_entropy_loss(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    let (steps, k) = match *logits.shape() {
        [t, k] => (t, k),
        [k] => (1, k),
        ref s => {
            return Err(Error::Validation(format!(
                "logits must be T x K, got {s:?}"
            )))
        }
    };
    if label >= k {
        return Err(Error::Validation(format!(
            "label {label} out of range for {k} classes"
        )));
    }
    if steps == 0 {
        return Err(Error::Validation("logits have no time steps".into()));
    }
    if let Some(i) = logits.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "logit (step={}, class={})",
            i / k,
            i % k
        )));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(steps * k);
    for row in logits.data().chunks_exact(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        for (c, p) in softmax(row).into_iter().enumerate() {
            let target = if c == label { 1.0 } else { 0.0 };
            grad.push((p - target) / steps as f64);
        }
    }
    Ok((loss / steps as f64, Tensor::new(logits.shape(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits() {
        let logits = Tensor::zeros(&[5, 11]);
        let (loss, _) = cross_entropy_loss(&logits, 3).unwrap();
        assert!((loss - 11f64.ln()).abs() < 1e-12);
        assert!((loss - 2.3979).abs() < 1e-4);
    }

    #[test]
    fn confident_correct_logits() {
        let logits = Tensor::from_fn(&[2, 4], |i| if i % 4 == 1 { 1e6 } else { 0.0 });
        let (loss, grad) = cross_entropy_loss(&logits, 1).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(grad.data().iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let logits = Tensor::from_fn(&[3, 5], |i| (i as f64 * 0.37).sin() * 4.0);
        let (_, grad) = cross_entropy_loss(&logits, 4).unwrap();
        for row in grad.data().chunks(5) {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let logits = Tensor::from_fn(&[2, 3], |i| i as f64 * 0.5 - 1.0);
        let (_, grad) = cross_entropy_loss(&logits, 2).unwrap();
        for i in 0..6 {
            let mut up = logits.clone();
            up.data_mut()[i] += 1e-6;
            let mut down = logits.clone();
            down.data_mut()[i] -= 1e-6;
            let fd = (cross_entropy_loss(&up, 2).unwrap().0
                - cross_entropy_loss(&down, 2).unwrap().0)
                / 2e-6;
            assert!((fd - grad.data()[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            cross_entropy_loss(&Tensor::zeros(&[2, 3]), 3),
            Err(Error::Validation(_))
        ));
        let bad = Tensor::new(&[1, 2], vec![0.0, f64::NAN]).unwrap();
        assert!(matches!(
            cross_entropy_loss(&bad, 0),
            Err(Error::Numeric(_))
        ));
    }
}
