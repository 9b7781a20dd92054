use ndarray::Zip;

use super::Mlp;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
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

/// Moment accumulators and step counter for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    first: Mlp,
    second: Mlp,
    step: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(params: &Mlp, config: AdamConfig) -> Self {
        Self {
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
            config,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Gradients are checked for finiteness before
    /// anything is touched, so a failed call leaves both params and state unchanged.
    pub fn step(&mut self, params: &mut Mlp, grads: &Mlp) -> Result<()> {
        if !params.same_shape(grads) || !params.same_shape(&self.first) {
            return Err(Error::shape("adam gradients", params.num_params(), grads.num_params()));
        }
        for (k, layer) in grads.layers().iter().enumerate() {
            if !layer.weights.iter().chain(layer.bias.iter()).all(|g| g.is_finite()) {
                return Err(Error::Numeric(format!("gradient of layer {k}")));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        let layers = params
            .layers_mut()
            .iter_mut()
            .zip(self.first.layers_mut().iter_mut())
            .zip(self.second.layers_mut().iter_mut())
            .zip(grads.layers());
        for (((p, m), v), g) in layers {
            Zip::from(&mut p.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut p.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }
}

/// Rescales all gradient sets jointly so their combined L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut Mlp], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.squared_norm()).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale(s);
        }
    }
    norm
}
