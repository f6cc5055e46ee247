//! Adam with per-group L2 regularization.

use serde::{Deserialize, Serialize};

use super::{scalar, Element, ParameterStore};
use crate::error::{Error, Result};

/// Name pattern plus coefficient. A pattern ending in `*` matches every
/// name with that prefix; any other pattern matches one exact name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayGroup {
    pub pattern: String,
    pub coefficient: f64,
}

impl DecayGroup {
    pub fn new(pattern: impl Into<String>, coefficient: f64) -> Self {
        Self {
            pattern: pattern.into(),
            coefficient,
        }
    }

    pub fn matches(&self, name: &str) -> bool {
        match self.pattern.strip_suffix('*') {
            Some(prefix) => name.starts_with(prefix),
            None => name == self.pattern,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Checked in order; the first matching group applies.
    pub decay: Vec<DecayGroup>,
}

impl Adam {
    pub fn new(lr: f64) -> Result<Self> {
        Self::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        if lr.is_nan() || lr <= 0.0 || !lr.is_finite() {
            return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::invalid(format!(
                "betas must lie in [0, 1), got {beta1}, {beta2}"
            )));
        }
        Ok(Self {
            lr,
            beta1,
            beta2,
            eps,
            decay: Vec::new(),
        })
    }

    pub fn with_decay(mut self, pattern: impl Into<String>, coefficient: f64) -> Self {
        self.decay.push(DecayGroup::new(pattern, coefficient));
        self
    }

    fn decay_for(&self, name: &str) -> f64 {
        self.decay
            .iter()
            .find(|g| g.matches(name))
            .map_or(0.0, |g| g.coefficient)
    }

    /// Applies one update using the gradients currently in the store.
    pub fn step<T: Element>(&self, store: &mut ParameterStore<T>) {
        store.step += 1;
        let t = store.step as i32;
        let (b1, b2): (T, T) = (scalar(self.beta1), scalar(self.beta2));
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let step: T = scalar(self.lr / bias1);
        let bias2: T = scalar(bias2);
        let eps: T = scalar(self.eps);
        let decay: Vec<f64> = store.names().map(|n| self.decay_for(n)).collect();
        for ((_, p), wd) in store.iter_mut().zip(decay) {
            let wd: Option<T> = (wd != 0.0).then(|| scalar(wd));
            let value = p.value.data_mut();
            let grad = p.grad.data();
            let m = p.m.data_mut();
            let v = p.v.data_mut();
            for i in 0..value.len() {
                let g = match wd {
                    Some(wd) => grad[i] + wd * value[i],
                    None => grad[i],
                };
                m[i] = b1 * m[i] + (T::one() - b1) * g;
                v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                value[i] = value[i] - step * m[i] / ((v[i] / bias2).sqrt() + eps);
            }
        }
    }
}
