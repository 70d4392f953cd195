//! Adam with per-block gradient normalization.
//!
//! Each parameter tensor's gradient is rescaled to unit L2 norm before the
//! moment updates. Blocks whose gradient norm is below [`NORM_FLOOR`] are
//! treated as zero.

use crate::error::Result;

use super::{ParamSet, Tensor2};

pub const NORM_FLOOR: f64 = 1e-12;

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

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor2>,
    second: Vec<Tensor2>,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor2> =
            params.tensors().iter().map(|t| Tensor2::zeros(t.rows(), t.cols())).collect();
        Self { config, step: 0, first: zeros.clone(), second: zeros }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Rescales every gradient block to unit L2 norm in place.
pub fn normalize_blocks(grads: &mut ParamSet) {
    for g in grads.tensors_mut() {
        let norm = g.l2_norm();
        if norm < NORM_FLOOR {
            g.fill(0.0);
        } else {
            g.scale(1.0 / norm);
        }
    }
}

/// One Adam update on normalized gradients. `grads` is consumed as scratch.
pub fn adam_step(params: &mut ParamSet, mut grads: ParamSet, state: &mut AdamState) -> Result<()> {
    params.check_same_layout(&grads)?;
    normalize_blocks(&mut grads);
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);
    for (i, g) in grads.tensors().iter().enumerate() {
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        let p = params.get_mut(i).data_mut();
        for j in 0..g.len() {
            let gj = g.data()[j];
            m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
            v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
