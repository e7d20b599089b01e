//! Adam optimizer and the stepped learning-rate schedule.

// f64 math through the trait so the crate builds without std
#[allow(unused_imports)]
use num_traits::Float as _;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, Result};
use crate::tensor::{Scalar, Tensor};

/// First/second moment estimates for one parameter list.
///
/// The state is keyed by position: call [`adam_step`] with the same
/// parameter order every time.
pub struct AdamState<T: Scalar> {
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        AdamState {
            step: 0,
            m: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
        }
    }

    /// Rebuild saved state (checkpoint loading).
    pub fn from_parts(step: u64, m: Vec<Vec<T>>, v: Vec<Vec<T>>) -> Result<Self> {
        if m.len() != v.len() {
            return Err(arg_err("AdamState", "moment lists differ in length"));
        }
        for (a, b) in m.iter().zip(&v) {
            if a.len() != b.len() {
                return Err(arg_err("AdamState", "moment buffers differ in size"));
            }
        }
        Ok(AdamState { step, m, v })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.m, &self.v)
    }
}

/// One Adam update over `params`, consuming their accumulated gradients.
///
/// Parameters whose gradient is absent are treated as having zero gradient.
/// Gradients are left in place; callers clear them between steps.
pub fn adam_step<T: Scalar>(params: &[Tensor<T>], state: &mut AdamState<T>, lr: T) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(arg_err(
            "adam_step",
            alloc::format!("{} params with state for {}", params.len(), state.m.len()),
        ));
    }
    state.step += 1;
    let b1 = T::from_f64(ADAM_BETA1);
    let b2 = T::from_f64(ADAM_BETA2);
    let eps = T::from_f64(ADAM_EPSILON);
    let one = T::one();
    // 1 - beta^t, computed in f64 to survive large step counts
    let c1 = T::from_f64(1.0 - ADAM_BETA1.powi(state.step as i32));
    let c2 = T::from_f64(1.0 - ADAM_BETA2.powi(state.step as i32));
    for (i, p) in params.iter().enumerate() {
        if p.numel() != state.m[i].len() {
            return Err(arg_err(
                "adam_step",
                alloc::format!("param {i} has {} values, state has {}", p.numel(), state.m[i].len()),
            ));
        }
        let grad = p.grad();
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        p.update_values(|w| {
            for j in 0..w.len() {
                let g = grad.as_ref().map_or(T::zero(), |g| g[j]);
                m[j] = b1 * m[j] + (one - b1) * g;
                v[j] = b2 * v[j] + (one - b2) * g * g;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                w[j] = w[j] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
    }
    Ok(())
}

/// Stepped decay: the initial rate halves every five epochs.
pub fn lr_at_epoch(initial: f64, epoch: usize) -> f64 {
    initial * 0.5f64.powi((epoch / 5) as i32)
}
