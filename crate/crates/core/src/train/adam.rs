use std::collections::BTreeMap;

use super::TrainError;
use crate::tensor::{Array, ParamStore};

pub const DEFAULT_LR: f64 = 3e-4;

/// Bias-corrected Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: BTreeMap<String, Array>,
    v: BTreeMap<String, Array>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn first_moment(&self, name: &str) -> Option<&Array> {
        self.m.get(name)
    }
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(DEFAULT_LR)
    }
}

pub fn global_norm(grads: &BTreeMap<String, Array>) -> f64 {
    grads.values().map(Array::sum_squares).sum::<f64>().sqrt()
}

/// Rescale so the global L2 norm is at most `max_norm`. Returns the norm before.
pub fn clip_global_norm(grads: &mut BTreeMap<String, Array>, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let f = max_norm / norm;
        for g in grads.values_mut() {
            g.scale_in_place(f);
        }
    }
    norm
}

/// One Adam update. All gradients are checked before anything is modified.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &BTreeMap<String, Array>,
    state: &mut AdamState,
) -> Result<(), TrainError> {
    for (name, g) in grads {
        let p = params.get(name).ok_or_else(|| TrainError::UnknownParam(name.clone()))?;
        if p.shape() != g.shape() {
            return Err(TrainError::Config(format!(
                "gradient for `{name}` has shape {:?}, parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
        if !g.all_finite() {
            return Err(TrainError::NonFiniteGradient(name.clone()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (name, g) in grads {
        let shape = g.shape().to_vec();
        let m = state.m.entry(name.clone()).or_insert_with(|| Array::zeros(&shape));
        let v = state.v.entry(name.clone()).or_insert_with(|| Array::zeros(&shape));
        let p = params.get_mut(name).expect("checked above");
        for (((pi, mi), vi), gi) in p
            .data_mut()
            .iter_mut()
            .zip(m.data_mut())
            .zip(v.data_mut())
            .zip(g.data())
        {
            *mi = state.beta1 * *mi + (1.0 - state.beta1) * gi;
            *vi = state.beta2 * *vi + (1.0 - state.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *pi -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}
