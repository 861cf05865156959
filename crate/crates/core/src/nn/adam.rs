use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set of trainable tensors visited in a fixed order.
///
/// Gradient mirrors are values of the same type, so the optimizer can pair
/// tensors positionally.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    /// Human-readable name of tensor `index`, used in error messages.
    fn tensor_name(&self, index: usize) -> String {
        format!("tensor[{index}]")
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates for every tensor of a parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new<P: Parameters + ?Sized>(params: &P, cfg: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            learning_rate: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        }
    }
}

/// One bias-corrected Adam update of `params` along `grads` (descent).
///
/// Gradients are validated in full before anything is written, so a failed
/// step leaves both the parameters and the state untouched.
pub fn adam_step<P: Parameters + ?Sized>(params: &mut P, grads: &P, state: &mut AdamState) -> Result<()> {
    let grad_tensors = grads.tensors();
    if grad_tensors.len() != state.first_moment.len() {
        return Err(Error::dimension(
            "adam_step tensor count",
            state.first_moment.len(),
            grad_tensors.len(),
        ));
    }
    for (i, (g, m)) in grad_tensors.iter().zip(&state.first_moment).enumerate() {
        if g.len() != m.len() {
            return Err(Error::dimension(
                format!("adam_step {}", grads.tensor_name(i)),
                m.len(),
                g.len(),
            ));
        }
        if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(
                "adam_step",
                format!("non-finite gradient in {} at element {pos}", grads.tensor_name(i)),
            ));
        }
    }

    let t = state.step_count + 1;
    let (b1, b2, eps, lr) = (state.beta1, state.beta2, state.epsilon, state.learning_rate);
    let bc1 = 1.0 - b1.powi(t as i32);
    let bc2 = 1.0 - b2.powi(t as i32);

    let mut param_tensors = params.tensors_mut();
    if param_tensors.len() != grad_tensors.len() {
        return Err(Error::dimension(
            "adam_step parameter count",
            grad_tensors.len(),
            param_tensors.len(),
        ));
    }
    for (((p, g), m), v) in param_tensors
        .iter_mut()
        .zip(&grad_tensors)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    state.step_count = t;
    Ok(())
}
