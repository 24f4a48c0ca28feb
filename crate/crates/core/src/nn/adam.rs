//! Adam with decoupled weight decay.
//!
//! Per step, with `t` counting from 1:
//!
//! ```text
//! p ← p − lr·wd·p
//! m ← β1·m + (1−β1)·g
//! v ← β2·v + (1−β2)·g²
//! p ← p − lr · (m / (1−β1ᵗ)) / (sqrt(v / (1−β2ᵗ)) + ε)
//! ```

use super::{Gradients, Parameterized};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(block_lens: &[usize]) -> Self {
        Self {
            step: 0,
            first: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
            second: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_params(params: &[&[f64]]) -> Self {
        Self::new(&params.iter().map(|p| p.len()).collect::<Vec<_>>())
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if lr.is_nan() || lr < 0.0 || weight_decay.is_nan() || weight_decay < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "adam needs lr >= 0 and weight_decay >= 0, got {lr} and {weight_decay}"
        )));
    }
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::Dimension(format!(
            "adam: {} parameter blocks, {} gradient blocks, {} state blocks",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.first[i].len() {
            return Err(Error::Dimension(format!(
                "adam block {i}: {} params, {} grads, {} state entries",
                p.len(),
                g.len(),
                state.first[i].len()
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - ADAM_BETA1.powi(t);
    let bias2 = 1.0 - ADAM_BETA2.powi(t);
    let decay = 1.0 - lr * weight_decay;
    for (block, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first[block];
        let v = &mut state.second[block];
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * gi;
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * gi * gi;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            p[i] = p[i] * decay - lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Optimizer bound to one model's parameter layout.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    state: AdamState,
}

impl Adam {
    pub fn new<M: Parameterized>(model: &M, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            state: AdamState::for_params(&model.params()),
        }
    }

    pub fn step<M: Parameterized>(&mut self, model: &mut M, grads: &Gradients) -> Result<()> {
        let mut params = model.params_mut();
        adam_step(
            &mut params,
            &grads.as_slices(),
            &mut self.state,
            self.lr,
            self.weight_decay,
        )
    }

    pub fn state(&self) -> &AdamState {
        &self.state
    }
}
