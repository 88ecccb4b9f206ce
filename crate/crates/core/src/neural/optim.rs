use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tensor::Tensor;
use super::Parameterized;

/// Adam with decoupled weight decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(params: &[&Tensor], lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: params.iter().map(|p| Tensor::zeros_like(p)).collect(),
            v: params.iter().map(|p| Tensor::zeros_like(p)).collect(),
        }
    }

    pub fn for_model(model: &impl Parameterized, lr: f64, weight_decay: f64) -> Self {
        Self::new(&model.parameters(), lr, weight_decay)
    }

    /// One update: `θ ← θ(1 − lr·wd) − lr·m̂/(√v̂ + ε)`.
    pub fn update(&mut self, mut params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters, {} gradients, {} moment buffers",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::ShapeMismatch(format!("parameter {:?} vs gradient {:?}", p.shape(), g.shape())));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - self.lr * self.weight_decay;
        for (i, p) in params.iter_mut().enumerate() {
            let g = grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (k, theta) in p.data_mut().iter_mut().enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                *theta = *theta * decay - self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Euclidean norm over all gradient entries.
pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt()
}

/// Rescales all gradients by `max_norm/‖g‖` when `‖g‖ > max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}
