use serde::{Deserialize, Serialize};

use super::mlp::{GradBundle, NetParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: GradBundle,
    pub v: GradBundle,
}

impl AdamState {
    pub fn new(params: &NetParams, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: GradBundle::zeros_like(params),
            v: GradBundle::zeros_like(params),
        }
    }

    /// One bias-corrected Adam step, in place.
    pub fn step(&mut self, params: &mut NetParams, grads: &GradBundle) -> Result<()> {
        if !grads.matches(params) || !self.m.matches(params) {
            return Err(Error::shape(
                "adam: gradient shape does not match parameters",
            ));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("adam gradients"));
        }
        self.step += 1;
        let (c1, c2) = bias_corrections(&self.config, self.step);
        for (((layer, g), m), v) in params
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            update_slice(
                &self.config,
                c1,
                c2,
                layer.weights_mut(),
                &g.weights,
                &mut m.weights,
                &mut v.weights,
            );
            update_slice(
                &self.config,
                c1,
                c2,
                layer.bias_mut(),
                &g.bias,
                &mut m.bias,
                &mut v.bias,
            );
        }
        Ok(())
    }
}

/// Adam for a single free scalar (the SAC temperature).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarAdam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: f64,
    pub v: f64,
}

impl ScalarAdam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: 0.0,
            v: 0.0,
        }
    }

    pub fn step(&mut self, param: &mut f64, grad: f64) -> Result<()> {
        if !grad.is_finite() {
            return Err(Error::NonFinite("adam gradients"));
        }
        self.step += 1;
        let (c1, c2) = bias_corrections(&self.config, self.step);
        update_slice(
            &self.config,
            c1,
            c2,
            std::slice::from_mut(param),
            &[grad],
            std::slice::from_mut(&mut self.m),
            std::slice::from_mut(&mut self.v),
        );
        Ok(())
    }
}

fn bias_corrections(cfg: &AdamConfig, step: u64) -> (f64, f64) {
    let t = step.min(i32::MAX as u64) as i32;
    (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t))
}

fn update_slice(
    cfg: &AdamConfig,
    c1: f64,
    c2: f64,
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
) {
    for i in 0..p.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        p[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
    }
}
