use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Linear warmup length in updates; 0 disables warmup.
    pub warmup: u64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            warmup: 100,
            clip_norm: 1.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.eps <= 0.0 || self.clip_norm < 0.0 {
            return Err(Error::Config(
                "eps must be positive and clip_norm non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Learning rate of 0-based update `step`.
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.warmup == 0 {
            self.lr
        } else {
            self.lr * ((step + 1) as f64 / self.warmup as f64).min(1.0)
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    config: OptimizerConfig,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    steps: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(config: OptimizerConfig, params: &ModelParams<T>) -> Self {
        let mut first = Vec::new();
        params.visit(&mut |_, t| first.push(vec![T::zero(); t.len()]));
        let second = first.clone();
        Self {
            config,
            first,
            second,
            steps: 0,
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update and returns the pre-clipping gradient norm.
    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) -> f64 {
        let norm = grads.global_norm();
        let clip = if self.config.clip_norm > 0.0 && norm > self.config.clip_norm {
            self.config.clip_norm / norm
        } else {
            1.0
        };
        let t = self.steps + 1;
        let lr = self.config.lr_at(self.steps);
        let b1 = self.config.beta1;
        let b2 = self.config.beta2;
        let step_size =
            T::from_f64c(lr * (1.0 - b2.powi(t as i32)).sqrt() / (1.0 - b1.powi(t as i32)));
        let eps = T::from_f64c(self.config.eps * (1.0 - b2.powi(t as i32)).sqrt());
        let (b1t, b2t) = (T::from_f64c(b1), T::from_f64c(b2));
        let (one_b1, one_b2) = (T::from_f64c(1.0 - b1), T::from_f64c(1.0 - b2));
        let clip = T::from_f64c(clip);

        let mut gdata = Vec::new();
        grads.visit(&mut |_, g| gdata.push(g.data().to_vec()));
        let mut idx = 0;
        let (first, second) = (&mut self.first, &mut self.second);
        params.visit_mut(&mut |_, p| {
            let g = &gdata[idx];
            let m = &mut first[idx];
            let v = &mut second[idx];
            for j in 0..p.len() {
                let gj = g[j] * clip;
                m[j] = b1t * m[j] + one_b1 * gj;
                v[j] = b2t * v[j] + one_b2 * gj * gj;
                p.data_mut()[j] -= step_size * m[j] / (v[j].sqrt() + eps);
            }
            idx += 1;
        });
        self.steps += 1;
        norm
    }
}
