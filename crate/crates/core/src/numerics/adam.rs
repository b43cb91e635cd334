use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{invalid, Error, Result};

/// Adam moments and hyperparameters for a single parameter matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first: Matrix,
    second: Matrix,
    step: u64,
}

impl AdamState {
    pub fn new(shape: (usize, usize), lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first: Matrix::zeros(shape.0, shape.1),
            second: Matrix::zeros(shape.0, shape.1),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn shape(&self) -> (usize, usize) {
        self.first.shape()
    }
}

/// One bias-corrected Adam update; returns the new parameters.
pub fn adam_step(state: &mut AdamState, params: &Matrix, grads: &Matrix) -> Result<Matrix> {
    if params.shape() != grads.shape() || params.shape() != state.shape() {
        return Err(Error::DimensionMismatch {
            op: "adam_step",
            left: params.shape(),
            right: grads.shape(),
        });
    }
    if !(state.lr >= 0.0) {
        return Err(invalid(format!(
            "learning rate must be nonnegative, got {}",
            state.lr
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let mut out = params.clone();
    let (m, v) = (state.first.data_mut(), state.second.data_mut());
    for (idx, p) in out.data_mut().iter_mut().enumerate() {
        let g = grads.data()[idx];
        m[idx] = b1 * m[idx] + (1.0 - b1) * g;
        v[idx] = b2 * v[idx] + (1.0 - b2) * g * g;
        let m_hat = m[idx] / c1;
        let v_hat = v[idx] / c2;
        *p -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    out.ensure_finite("adam_step")
}
