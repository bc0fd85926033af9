use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const NUM_CLASSES: usize = 2;

/// Cross-entropy loss of one sample together with the logits and softmax
/// probabilities it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub logits: Tensor,
    pub probabilities: Tensor,
}

/// Softmax followed by negative log-likelihood of `label`.
///
/// Uses max subtraction and `ln_1p`, so confident predictions keep full
/// relative precision (e.g. logits `[10, -10]` give `ln(1 + e^-20)`).
/// Returns the loss and `softmax(logits) - onehot(label)`.
pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<(LossValue, Tensor)> {
    if logits.shape() != [NUM_CLASSES] {
        return Err(Error::shape(format!(
            "expected {NUM_CLASSES} logits, got {:?}",
            logits.shape()
        )));
    }
    if label >= NUM_CLASSES {
        return Err(Error::arg(format!("label {label} is not a class index")));
    }
    let z = logits.data();
    let (top, top_val) =
        z.iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            });
    let shifted: Vec<f64> = z.iter().map(|&v| (v - top_val).exp()).collect();
    let rest: f64 = shifted
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, &e)| e)
        .sum();
    let value = rest.ln_1p() + (top_val - z[label]);
    let total = 1.0 + rest;
    let probs: Vec<f64> = shifted.iter().map(|e| e / total).collect();
    let grad: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| if i == label { p - 1.0 } else { p })
        .collect();
    let probabilities = Tensor::new(&[NUM_CLASSES], probs)?;
    Ok((
        LossValue {
            value,
            logits: logits.clone(),
            probabilities,
        },
        Tensor::new(&[NUM_CLASSES], grad)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logits(a: f64, b: f64) -> Tensor {
        Tensor::new(&[2], vec![a, b]).unwrap()
    }

    #[test]
    fn uniform_logits_cost_ln2() {
        let (loss, grad) = softmax_cross_entropy(&logits(0.0, 0.0), 0).unwrap();
        assert!((loss.value - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(loss.probabilities.data(), &[0.5, 0.5]);
        assert_eq!(grad.data(), &[-0.5, 0.5]);
    }

    #[test]
    fn confident_logits_keep_precision() {
        let (loss, _) = softmax_cross_entropy(&logits(10.0, -10.0), 0).unwrap();
        // ln(1 + e^-20) to 40 digits (mpmath): 2.0611536203143807032e-9.
        let want = (-20.0f64).exp().ln_1p();
        assert!((loss.value - 2.061_153_620_314_381e-9).abs() < 1e-23);
        assert_eq!(loss.value, want);
        let (wrong, _) = softmax_cross_entropy(&logits(10.0, -10.0), 1).unwrap();
        assert!((wrong.value - (20.0 + want)).abs() < 1e-12);
    }

    #[test]
    fn gradient_sums_to_zero() {
        for (a, b, y) in [
            (1.3, -0.2, 0),
            (-5.0, 7.5, 1),
            (300.0, -300.0, 1),
            (0.1, 0.1, 0),
        ] {
            let (loss, grad) = softmax_cross_entropy(&logits(a, b), y).unwrap();
            assert!(grad.sum().abs() < 1e-15);
            assert!((loss.probabilities.sum() - 1.0).abs() < 1e-12);
            assert!(loss
                .probabilities
                .data()
                .iter()
                .all(|&p| (0.0..=1.0).contains(&p)));
            assert!(loss.value >= 0.0);
        }
    }

    #[test]
    fn rejects_bad_label() {
        assert!(matches!(
            softmax_cross_entropy(&logits(0.0, 0.0), 2),
            Err(Error::Argument(_))
        ));
        let three = Tensor::zeros(&[3]);
        assert!(softmax_cross_entropy(&three, 0).is_err());
    }
}
