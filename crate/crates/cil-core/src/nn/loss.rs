//! Softmax cross-entropy over class logits.

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};
use crate::tensor::Tensor;

/// Mean cross-entropy of a batch plus the gradient w.r.t. the logits.
///
/// The softmax is computed with the usual max-shift for stability; the
/// gradient is `(softmax - onehot) / n`.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(f64, Tensor<T>)> {
    if logits.shape().len() != 2 {
        return Err(Error::usage(format!(
            "logits must be [n, k], got {:?}",
            logits.shape()
        )));
    }
    let (n, k) = (logits.rows(), logits.cols());
    if labels.len() != n {
        return Err(Error::usage(format!(
            "{} labels for a batch of {n}",
            labels.len()
        )));
    }
    if n == 0 {
        return Err(Error::usage("cannot take the loss of an empty batch"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::usage(format!(
            "label {bad} out of range for {k} logits"
        )));
    }

    let inv_n = T::one() / cast::<T>(n as f64);
    let mut dlogits = Tensor::zeros(&[n, k]);
    let mut loss = 0.0f64;
    for (i, (row, drow)) in logits
        .data()
        .chunks_exact(k)
        .zip(dlogits.data_mut().chunks_exact_mut(k))
        .enumerate()
    {
        let max = row.iter().cloned().fold(row[0], T::max);
        let mut sum = T::zero();
        for (d, &v) in drow.iter_mut().zip(row) {
            let e = (v - max).exp();
            *d = e;
            sum += e;
        }
        let y = labels[i];
        // log p_y = (z_y - max) - log sum
        let log_py = (row[y] - max).to_f64().expect("finite logit")
            - sum.to_f64().expect("finite softmax sum").ln();
        loss -= log_py;
        for (j, d) in drow.iter_mut().enumerate() {
            let p = *d / sum;
            let target = if j == y { T::one() } else { T::zero() };
            *d = (p - target) * inv_n;
        }
    }
    let loss = loss / n as f64;
    if !loss.is_finite() || !dlogits.all_finite() {
        return Err(Error::numeric("non-finite value in cross-entropy"));
    }
    Ok((loss, dlogits))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_k() {
        // equal logits -> softmax is uniform -> loss is ln(k) exactly
        for k in [2usize, 5, 10] {
            let logits = Tensor::<f64>::zeros(&[3, k]);
            let (loss, _) = softmax_cross_entropy(&logits, &[0, k - 1, k / 2]).unwrap();
            assert!(
                (loss - (k as f64).ln()).abs() < 1e-12,
                "k={k}: loss {loss} vs ln(k) {}",
                (k as f64).ln()
            );
        }
    }

    #[test]
    fn gradient_matches_softmax_minus_onehot() {
        let logits = Tensor::from_vec(&[2, 3], vec![1.0f64, 2.0, 0.5, -1.0, 0.0, 1.0]).unwrap();
        let labels = [1usize, 2];
        let (_, dlogits) = softmax_cross_entropy(&logits, &labels).unwrap();

        // independent softmax computation
        for (i, &label) in labels.iter().enumerate() {
            let row = &logits.data()[i * 3..(i + 1) * 3];
            let exps: Vec<f64> = row.iter().map(|v| v.exp()).collect();
            let z: f64 = exps.iter().sum();
            for (j, e) in exps.iter().enumerate() {
                let p = e / z;
                let want = (p - if j == label { 1.0 } else { 0.0 }) / 2.0;
                let got = dlogits.data()[i * 3 + j];
                assert!((got - want).abs() < 1e-12, "({i},{j}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let logits =
            Tensor::from_vec(&[2, 4], vec![3.0f64, -2.0, 0.1, 0.9, 10.0, 9.0, 8.0, 7.0]).unwrap();
        let (_, dlogits) = softmax_cross_entropy(&logits, &[0, 3]).unwrap();
        for row in dlogits.data().chunks_exact(4) {
            let s: f64 = row.iter().sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn large_logits_stay_finite() {
        // the max-shift keeps exp() in range even for large magnitudes
        let logits = Tensor::from_vec(&[1, 3], vec![1000.0f64, 999.0, -1000.0]).unwrap();
        let (loss, dlogits) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!(loss.is_finite());
        assert!(dlogits.all_finite());
        assert!(loss < 0.35); // -ln(e^0/(e^0+e^-1+e^-2000)) = ln(1+e^-1) ≈ 0.3133
    }

    #[test]
    fn out_of_range_label_is_a_usage_error() {
        let logits = Tensor::<f32>::zeros(&[1, 3]);
        assert!(matches!(
            softmax_cross_entropy(&logits, &[3]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn empty_batch_is_a_usage_error() {
        let logits = Tensor::<f32>::zeros(&[0, 3]);
        assert!(matches!(
            softmax_cross_entropy(&logits, &[]),
            Err(Error::Usage(_))
        ));
    }
}
