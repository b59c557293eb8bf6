//! Adam and global-norm gradient clipping.

use alloc::vec;
use alloc::vec::Vec;

use super::math::sqrt;
use super::Params;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
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

/// First and second moment estimates, one buffer per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: Params + ?Sized>(config: AdamConfig, params: &P) -> Self {
        let m: Vec<Vec<f64>> = params.groups().iter().map(|(_, g)| vec![0.0; g.len()]).collect();
        Self { config, step: 0, v: m.clone(), m }
    }

    /// One bias-corrected Adam update.
    pub fn step<P: Params + ?Sized, G: Params + ?Sized>(&mut self, params: &mut P, grads: &G) -> Result<()> {
        let grads = grads.groups();
        let mut params = params.groups_mut();
        if grads.len() != params.len() || params.len() != self.m.len() {
            return Err(Error::Shape("parameter groups do not match the optimizer state".into()));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(c.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, t as f64);
        for (gi, ((_, p), (_, g))) in params.iter_mut().zip(&grads).enumerate() {
            if p.len() != g.len() || p.len() != self.m[gi].len() {
                return Err(Error::Shape("parameter group length mismatch".into()));
            }
            let m = &mut self.m[gi];
            let v = &mut self.v[gi];
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= c.lr * mhat / (sqrt(vhat) + c.eps);
            }
        }
        Ok(())
    }
}

/// Rescales all gradients by `max_norm / norm` when their global L2 norm exceeds
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm<G: Params + ?Sized>(grads: &mut G, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        let scale = max_norm / norm;
        for (_, g) in grads.groups_mut() {
            g.iter_mut().for_each(|x| *x *= scale);
        }
    }
    norm
}
