//! Central finite-difference oracle for analytic gradients.
//!
//! The oracle perturbs every trainable parameter element by `±h`, estimates
//! the derivative as `(loss(w+h) - loss(w-h)) / 2h`, and compares it with the
//! analytic gradient using the relative error
//! `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
//!
//! ReLU and max-pool make the loss piecewise smooth. When a perturbation
//! interval crosses a switching boundary (a ReLU flips or a pool argmax
//! moves), the central difference straddles two pieces and no longer
//! estimates the derivative of either, so the comparison is meaningless at
//! that element. The driver detects crossings by comparing activation
//! signatures and excludes those elements, reporting how many were skipped;
//! callers should assert the skipped fraction stays small.

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};
use crate::tensor::Tensor;

use super::{ActivationSignature, Gradients, ParamKey};

/// A model-plus-batch bundle that the finite-difference driver can probe.
pub trait GradCheckTarget<T: Scalar> {
    /// Keys of every trainable parameter, in canonical order.
    fn keys(&self) -> Vec<ParamKey>;

    fn param(&self, key: ParamKey) -> &Tensor<T>;

    fn param_mut(&mut self, key: ParamKey) -> &mut Tensor<T>;

    /// Loss at the current parameters plus the forward pass's switching
    /// state.
    fn loss(&self) -> Result<(f64, ActivationSignature)>;

    /// Loss plus analytic gradients at the current parameters.
    fn loss_and_grads(&self) -> Result<(f64, Gradients<T>)>;
}

/// Outcome of a finite-difference sweep.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Max relative error over all compared elements.
    pub max_rel_err: f64,
    /// Parameter and flat element index attaining `max_rel_err`.
    pub worst: Option<(ParamKey, usize)>,
    /// Elements compared.
    pub checked: usize,
    /// Elements excluded because `±h` crossed a switching boundary.
    pub skipped: usize,
}

impl GradCheckReport {
    /// Fraction of elements excluded by boundary crossings.
    pub fn skipped_fraction(&self) -> f64 {
        let total = self.checked + self.skipped;
        if total == 0 {
            0.0
        } else {
            self.skipped as f64 / total as f64
        }
    }
}

/// Computes analytic gradients via the target's own backward pass and checks
/// them against central finite differences with step `h`.
pub fn finite_diff_check<T: Scalar, M: GradCheckTarget<T>>(
    target: &mut M,
    h: f64,
) -> Result<GradCheckReport> {
    let (_, grads) = target.loss_and_grads()?;
    compare_to_numeric(target, &grads, h)
}

/// Checks externally supplied gradients against central finite differences.
/// Useful for verifying that the driver can detect wrong gradients.
pub fn compare_to_numeric<T: Scalar, M: GradCheckTarget<T>>(
    target: &mut M,
    analytic: &Gradients<T>,
    h: f64,
) -> Result<GradCheckReport> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::usage(format!("step size must be > 0, got {h}")));
    }
    let (_, base_sig) = target.loss()?;
    let step = cast::<T>(h);
    let two_h = 2.0 * h;

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
        skipped: 0,
    };
    for key in target.keys() {
        let grad = analytic
            .by_key
            .get(&key)
            .ok_or_else(|| Error::usage(format!("no analytic gradient for {key}")))?;
        if grad.shape() != target.param(key).shape() {
            return Err(Error::usage(format!(
                "gradient shape {:?} does not match parameter {key} {:?}",
                grad.shape(),
                target.param(key).shape()
            )));
        }
        for i in 0..grad.len() {
            let orig = target.param(key).data()[i];
            target.param_mut(key).data_mut()[i] = orig + step;
            let (loss_plus, sig_plus) = target.loss()?;
            target.param_mut(key).data_mut()[i] = orig - step;
            let (loss_minus, sig_minus) = target.loss()?;
            target.param_mut(key).data_mut()[i] = orig;

            if sig_plus != base_sig || sig_minus != base_sig {
                report.skipped += 1;
                continue;
            }
            let numeric = (loss_plus - loss_minus) / two_h;
            let a = grad.data()[i].to_f64().expect("finite gradient");
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((key, i));
            }
        }
    }
    Ok(report)
}
