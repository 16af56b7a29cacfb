use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower clamp applied to probabilities before taking the log.
pub const PROB_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<T> {
    /// Mean negative log-likelihood of the true class.
    pub loss: T,
    /// Gradient of the fused softmax + cross-entropy w.r.t. the logits, `(p - onehot(y)) / N`.
    pub grad_logits: Vec<T>,
}

/// Sparse categorical cross-entropy over `N x k` probabilities with integer labels.
pub fn scc_loss<T: Scalar>(probs: &[T], labels: &[usize], k: usize) -> Result<LossOutput<T>> {
    let n = labels.len();
    if n == 0 || probs.len() != n * k {
        return Err(Error::ShapeMismatch(format!(
            "{} probabilities for {n} labels x {k} classes",
            probs.len()
        )));
    }
    let eps = T::lit(PROB_EPSILON);
    let inv_n = T::one() / T::from_usize(n).expect("batch size fits");
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(probs.len());
    for (row, &y) in probs.chunks_exact(k).zip(labels) {
        if y >= k {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes: k,
            });
        }
        let p = row[y].max(eps).min(T::one());
        total -= p.ln();
        for (j, &pj) in row.iter().enumerate() {
            let target = if j == y { T::one() } else { T::zero() };
            grad.push((pj - target) * inv_n);
        }
    }
    Ok(LossOutput {
        loss: total * inv_n,
        grad_logits: grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::softmax;

    #[test]
    fn perfect_prediction_is_zero() {
        let out = scc_loss(&[0.0f64, 1.0], &[1], 2).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn uniform_prediction_is_ln2() {
        let out = scc_loss(&[0.5f64, 0.5], &[0], 2).unwrap();
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(out.grad_logits, vec![-0.5, 0.5]);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let out = scc_loss(&[1.0f64, 0.0], &[1], 2).unwrap();
        assert!((out.loss - (-(1e-7f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn out_of_range_label() {
        assert!(matches!(
            scc_loss(&[0.5f32, 0.5], &[2], 2),
            Err(Error::LabelOutOfRange { label: 2, .. })
        ));
    }

    #[test]
    fn fused_gradient_matches_finite_differences() {
        let logits = [0.3f64, -1.2, 0.7, 0.1];
        let labels = [0usize, 1];
        let loss_at = |z: &[f64]| scc_loss(&softmax(z, 2), &labels, 2).unwrap().loss;
        let analytic = scc_loss(&softmax(&logits, 2), &labels, 2)
            .unwrap()
            .grad_logits;
        let h = 1e-5;
        for i in 0..4 {
            let mut up = logits;
            let mut dn = logits;
            up[i] += h;
            dn[i] -= h;
            let fd = (loss_at(&up) - loss_at(&dn)) / (2.0 * h);
            assert!(
                (fd - analytic[i]).abs() < 1e-8,
                "{i}: {fd} vs {}",
                analytic[i]
            );
        }
    }
}
