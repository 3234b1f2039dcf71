//! Adam optimizer with bias-corrected first and second moments.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};
use crate::tensor::Tensor;

use super::ParamKey;

/// Adam hyperparameters. The defaults are the standard
/// `lr = 0.001, beta1 = 0.9, beta2 = 0.999, eps = 1e-8`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config(format!(
                "learning rate must be > 0, got {}",
                self.lr
            )));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::config(format!(
                    "{name} must be in [0, 1), got {beta}"
                )));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::config(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Per-parameter moment estimates. Each slot keeps its own step count so a
/// parameter registered late (an expanding head block) starts its bias
/// correction at t = 1.
#[derive(Clone, Debug)]
struct Slot<T> {
    m: Tensor<T>,
    v: Tensor<T>,
    t: u64,
}

/// Optimizer state across all registered parameters.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    hyper: AdamHyper,
    slots: BTreeMap<ParamKey, Slot<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(hyper: AdamHyper) -> Result<Self> {
        hyper.validate()?;
        Ok(AdamState {
            hyper,
            slots: BTreeMap::new(),
        })
    }

    pub fn hyper(&self) -> AdamHyper {
        self.hyper
    }

    /// Applies one Adam step to `value` in place using `grad`.
    ///
    /// The moment slot is created lazily on first use; a shape change for an
    /// existing key is a usage error.
    pub fn step_param(
        &mut self,
        key: ParamKey,
        value: &mut Tensor<T>,
        grad: &Tensor<T>,
    ) -> Result<()> {
        if grad.shape() != value.shape() {
            return Err(Error::usage(format!(
                "gradient shape {:?} does not match parameter {key} {:?}",
                grad.shape(),
                value.shape()
            )));
        }
        let slot = self.slots.entry(key).or_insert_with(|| Slot {
            m: Tensor::zeros(grad.shape()),
            v: Tensor::zeros(grad.shape()),
            t: 0,
        });
        if slot.m.shape() != grad.shape() {
            return Err(Error::usage(format!(
                "optimizer slot for {key} has shape {:?}, gradient is {:?}",
                slot.m.shape(),
                grad.shape()
            )));
        }
        slot.t += 1;
        let b1 = cast::<T>(self.hyper.beta1);
        let b2 = cast::<T>(self.hyper.beta2);
        let one = T::one();
        // bias-corrected step size folded into a single scalar
        let bc1 = 1.0 - self.hyper.beta1.powi(slot.t as i32);
        let bc2 = 1.0 - self.hyper.beta2.powi(slot.t as i32);
        let step = cast::<T>(self.hyper.lr / bc1);
        let inv_sqrt_bc2 = cast::<T>(1.0 / bc2.sqrt());
        let eps = cast::<T>(self.hyper.eps);

        let m = slot.m.data_mut();
        let v = slot.v.data_mut();
        let p = value.data_mut();
        for i in 0..grad.len() {
            let g = grad.data()[i];
            m[i] = b1 * m[i] + (one - b1) * g;
            v[i] = b2 * v[i] + (one - b2) * g * g;
            let vhat_sqrt = (v[i]).sqrt() * inv_sqrt_bc2;
            p[i] -= step * m[i] / (vhat_sqrt + eps);
        }
        Ok(())
    }

    /// Number of steps applied to `key` so far (0 if never stepped).
    pub fn steps_for(&self, key: ParamKey) -> u64 {
        self.slots.get(&key).map_or(0, |s| s.t)
    }
}
