use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::{Grads, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: Some(1.0) }
    }
}

pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    lr_scale: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<_> = store.iter().map(|(_, _, p)| Array2::zeros(p.raw_dim())).collect();
        let lr_scale = vec![1.0; zeros.len()];
        Self { config, m: zeros.clone(), v: zeros, lr_scale, t: 0 }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &mut Grads) {
        if let Some(max) = self.config.clip_norm {
            let norm = grads.global_norm();
            if norm > max {
                grads.scale(max / norm);
            }
        }
        self.t += 1;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let Some(g) = grads.get(id) else { continue };
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            let lr = c.lr * self.lr_scale[id.index()];
            let p = store.get_mut(id);
            ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
            });
        }
    }

    /// Multiplies the learning rate of one parameter.
    pub fn set_lr_scale(&mut self, id: super::params::ParamId, scale: f64) {
        self.lr_scale[id.index()] = scale;
    }

    /// Clears moment estimates for selected rows of one parameter (used after codebook re-seeding).
    pub fn reset_rows(&mut self, id: super::params::ParamId, rows: &[usize]) {
        for &r in rows {
            self.m[id.index()].row_mut(r).fill(0.0);
            self.v[id.index()].row_mut(r).fill(0.0);
        }
    }
}
