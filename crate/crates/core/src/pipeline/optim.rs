//! AdamW with decoupled weight decay, and global-norm clipping.

use serde::{Deserialize, Serialize};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    #[serde(skip)]
    pub m: Vec<f64>,
    #[serde(skip)]
    pub v: Vec<f64>,
}

impl AdamW {
    pub fn new(len: usize) -> Self {
        AdamW {
            beta1: BETA1,
            beta2: BETA2,
            eps: EPS,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// `p ← p − lr·m̂/(√v̂ + ε) − lr·wd·p`.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64, wd: f64) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            let p = params[i];
            params[i] = p - lr * mh / (vh.sqrt() + self.eps) - lr * wd * p;
        }
    }
}

/// Rescales `g` to global norm `max_norm` if it is longer; returns the norm
/// before clipping.
pub fn clip_global_norm(g: &mut [f64], max_norm: f64) -> f64 {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        g.iter_mut().for_each(|x| *x *= s);
    }
    norm
}
