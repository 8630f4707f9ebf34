//! Adam with bias correction, plus a one-cycle learning-rate schedule.

use std::collections::BTreeMap;

use super::checkpoint::ParamStore;
use super::tensor::TensorError;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

pub struct Adam {
    cfg: AdamConfig,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam { cfg, m: BTreeMap::new(), v: BTreeMap::new(), t: 0 }
    }

    /// Applies one update using the gradients currently stored on the
    /// parameters. Every parameter must have a gradient; a missing one means
    /// the graph silently detached somewhere, which is a bug worth loud
    /// failure.
    pub fn step(&mut self, params: &ParamStore, lr: f64) -> Result<(), TensorError> {
        self.t += 1;
        let bc1 = 1.0 - self.cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.cfg.beta2.powi(self.t as i32);
        for (name, p) in params.iter() {
            let g = p
                .grad()
                .ok_or_else(|| TensorError::MissingGrad { name: name.clone() })?;
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let mut new_vals = p.to_vec();
            for i in 0..g.len() {
                m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * g[i];
                v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                new_vals[i] -= lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
            p.set_values(&new_vals)?;
        }
        Ok(())
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}

/// Linear warmup to the base rate over the first 30% of steps, then cosine
/// decay back down. Both ends sit at base/25.
#[derive(Clone, Copy, Debug)]
pub struct OneCycle {
    pub base_lr: f64,
    pub total_steps: u64,
}

impl OneCycle {
    pub fn new(base_lr: f64, total_steps: u64) -> Self {
        OneCycle { base_lr, total_steps: total_steps.max(1) }
    }

    pub fn lr(&self, step: u64) -> f64 {
        let lo = self.base_lr / 25.0;
        let warmup = ((self.total_steps as f64 * 0.3).round() as u64).max(1);
        if step <= warmup {
            let frac = step as f64 / warmup as f64;
            lo + (self.base_lr - lo) * frac
        } else {
            let span = (self.total_steps.saturating_sub(1).saturating_sub(warmup)).max(1);
            let q = ((step - warmup) as f64 / span as f64).min(1.0);
            lo + (self.base_lr - lo) * 0.5 * (1.0 + (std::f64::consts::PI * q).cos())
        }
    }
}
