use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
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

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// First and second moment buffers over the flattened parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let n = params.num_params();
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    /// Applies one bias-corrected update from the gradient buffer.
    pub fn step(&mut self, params: &mut ModelParams, cfg: &AdamConfig) -> Result<()> {
        if self.m.len() != params.num_params() || self.v.len() != self.m.len() {
            return Err(Error::Shape("optimizer state does not match the model".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let mut i = 0;
        for (param, grad) in params.param_grad_pairs() {
            for (w, &g) in param.iter_mut().zip(grad) {
                let m = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
                let v = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
                self.m[i] = m;
                self.v[i] = v;
                *w -= cfg.lr * (m / c1) / ((v / c2).sqrt() + cfg.eps);
                i += 1;
            }
        }
        Ok(())
    }
}
