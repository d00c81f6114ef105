use serde::{Deserialize, Serialize};

use super::mlp::EncoderParams;
use crate::{Error, Result};

/// Multiplicative learning-rate decay applied every [`DECAY_EVERY_EPOCHS`].
pub const DECAY_FACTOR: f64 = 0.1;
pub const DECAY_EVERY_EPOCHS: usize = 50;

/// Step-decay schedule: `base_lr · 0.1^⌊epoch / 50⌋`.
pub fn lr_schedule(epoch: usize, base_lr: f64) -> f64 {
    base_lr * DECAY_FACTOR.powi((epoch / DECAY_EVERY_EPOCHS) as i32)
}

/// Adam moment estimates, laid out like [`EncoderParams::tensors`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Zeroed state with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(params: &EncoderParams) -> Self {
        Self::with_hyperparams(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparams(params: &EncoderParams, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|t| vec![0.0; t.len()])
            .collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            beta1,
            beta2,
            epsilon,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut EncoderParams,
    grads: &EncoderParams,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let grad_tensors = grads.tensors();
    let param_tensors = params.tensors_mut();
    let congruent = param_tensors.len() == grad_tensors.len()
        && param_tensors.len() == state.first_moment.len()
        && param_tensors
            .iter()
            .zip(&grad_tensors)
            .zip(&state.first_moment)
            .zip(&state.second_moment)
            .all(|(((p, g), m), v)| p.len() == g.len() && p.len() == m.len() && p.len() == v.len());
    if !congruent {
        return Err(Error::Shape(
            "parameters, gradients and optimizer state are not congruent".into(),
        ));
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in param_tensors
        .into_iter()
        .zip(grad_tensors)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
