//! Adam optimizer state over a flat parameter vector.

use crate::error::{Result, UleeError};
use crate::nn::FlatParams;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    /// One Adam step: params <- params - lr * m̂ / (sqrt(v̂) + eps).
    pub fn apply(
        &mut self,
        params: &mut FlatParams,
        grad: &FlatParams,
        lr: f64,
        eps: f64,
    ) -> Result<()> {
        if grad.data.len() != self.m.len() || params.data.len() != self.m.len() {
            return Err(UleeError::Contract(
                "adam: parameter/gradient/state sizes differ".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        for i in 0..self.m.len() {
            let g = grad.data[i];
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params.data[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
        params.assert_finite("adam step")
    }
}

/// Clips the gradient to a maximum global norm in place; returns the
/// pre-clip norm.
pub fn clip_global_norm(grad: &mut FlatParams, max_norm: f64) -> f64 {
    let norm = grad.global_norm();
    if norm > max_norm {
        grad.scale(max_norm / norm);
    }
    norm
}
