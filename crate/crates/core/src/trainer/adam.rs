//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(sizes: &[usize]) -> Self {
        AdamState {
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.first.iter().map(Vec::len).collect()
    }
}

/// A parameter tensor paired with its gradient.
pub struct ParamSlot<'a> {
    pub name: &'static str,
    pub values: &'a mut [f64],
    pub grad: &'a [f64],
}

/// One Adam update of every slot. Nothing is modified when a shape
/// mismatches or any gradient entry is non-finite.
pub fn adam_step(slots: &mut [ParamSlot<'_>], state: &mut AdamState, lr: f64) -> Result<()> {
    if slots.len() != state.first.len() {
        return Err(Error::Shape(format!(
            "{} parameter tensors for optimizer state of {}",
            slots.len(),
            state.first.len()
        )));
    }
    for (slot, m) in slots.iter().zip(&state.first) {
        if slot.values.len() != slot.grad.len() || slot.values.len() != m.len() {
            return Err(Error::Shape(format!(
                "{}: {} values, {} gradients, {} moments",
                slot.name,
                slot.values.len(),
                slot.grad.len(),
                m.len()
            )));
        }
        if let Some((index, &value)) = slot.grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
            return Err(Error::NonFinite { tensor: slot.name, index, value });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - BETA1.powi(t);
    let bias2 = 1.0 - BETA2.powi(t);
    for ((slot, m), v) in slots.iter_mut().zip(state.first.iter_mut()).zip(state.second.iter_mut()) {
        for (((p, &g), mi), vi) in slot.values.iter_mut().zip(slot.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = BETA1 * *mi + (1.0 - BETA1) * g;
            *vi = BETA2 * *vi + (1.0 - BETA2) * g * g;
            let m_hat = *mi / bias1;
            let v_hat = *vi / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    Ok(())
}
