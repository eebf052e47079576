use std::collections::BTreeMap;

use crate::{Grads, NeuralError, ParamStore, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam. Moment buffers are created lazily, zeroed, the first
/// time a tensor receives a gradient; tensors that never receive one are left
/// untouched.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    first: BTreeMap<String, Vec<T>>,
    second: BTreeMap<String, Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, first: BTreeMap::new(), second: BTreeMap::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. All gradients are validated before any parameter
    /// is written, so a NaN leaves the model unchanged.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Grads<T>) -> Result<()> {
        for name in grads.names() {
            if !params.contains(name) {
                return Err(NeuralError::MissingParam(name.to_string()));
            }
            if !grads.is_finite(name) {
                return Err(NeuralError::NonFiniteGradient(name.to_string()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let (b1, b2) = (T::of(beta1), T::of(beta2));
        let (ob1, ob2) = (T::of(1.0 - beta1), T::of(1.0 - beta2));
        let (lr, eps, c1, c2) = (T::of(lr), T::of(eps), T::of(c1), T::of(c2));

        for (name, tensor) in params.iter_mut() {
            let n = tensor.len();
            let grad = grads.to_dense(name, n);
            if grad.is_none() && !self.first.contains_key(name) {
                continue;
            }
            let m = self.first.entry(name.clone()).or_insert_with(|| vec![T::zero(); n]);
            let v = self.second.entry(name.clone()).or_insert_with(|| vec![T::zero(); n]);
            if m.len() != n {
                return Err(NeuralError::Dimension(format!("optimizer state for `{name}` has stale shape")));
            }
            let zeros;
            let g = match &grad {
                Some(g) => g.as_slice(),
                None => {
                    zeros = vec![T::zero(); n];
                    zeros.as_slice()
                }
            };
            for (((p, &gi), mi), vi) in tensor.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + ob1 * gi;
                *vi = b2 * *vi + ob2 * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
