use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coupled L2 penalty added to the gradient before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Bias-corrected Adam over every entry of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Result<Self> {
        if !(config.lr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                config.lr
            )));
        }
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(Error::InvalidArgument("betas must lie in [0, 1)".into()));
        }
        if !(config.eps > 0.0) || config.weight_decay < 0.0 {
            return Err(Error::InvalidArgument(
                "eps must be positive and weight decay non-negative".into(),
            ));
        }
        Ok(Self {
            config,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Number of updates applied so far.
    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update from the gradients currently stored in `store`.
    /// Gradients are left in place.
    pub fn step(&mut self, store: &mut ParamStore) {
        if self.first.len() != store.len() {
            self.first = store.entries().iter().map(|e| Tensor::zeros(e.value.shape())).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let i = id.index();
            let grad = store.grad(id).data().to_vec();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let value = store.value_mut(id).data_mut();
            for k in 0..value.len() {
                let g = grad[k] + weight_decay * value[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                value[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// One Adam update at step index `t` with freshly zeroed moments.
pub fn adam_step(store: &mut ParamStore, lr: f64, beta1: f64, beta2: f64, eps: f64, t: u64) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidArgument("Adam step index starts at 1".into()));
    }
    let mut adam = Adam::new(AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
        weight_decay: 0.0,
    })?;
    adam.step = t - 1;
    adam.step(store);
    Ok(())
}
