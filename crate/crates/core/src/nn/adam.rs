use super::Parameters;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moment accumulators for one parameter bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    /// Name used in error messages.
    pub network: String,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(network: impl Into<String>, params: &impl Parameters) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        AdamState {
            network: network.into(),
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update, in place. Tensors are paired in order;
/// tensor `t` of an MLP belongs to layer `t / 2`.
pub fn adam_step(
    params: &mut impl Parameters,
    grads: &impl Parameters,
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<()> {
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate {learning_rate}"
        )));
    }
    let grads = grads.tensors();
    let mut tensors = params.tensors_mut();
    if grads.len() != tensors.len() || state.first.len() != tensors.len() {
        return Err(Error::shape("adam_step", tensors.len(), grads.len()));
    }
    for (t, (p, g)) in tensors.iter().zip(&grads).enumerate() {
        if p.len() != g.len() || state.first[t].len() != p.len() {
            return Err(Error::shape("adam_step tensor", p.len(), g.len()));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient {
                network: state.network.clone(),
                layer: t / 2,
            });
        }
    }
    state.step += 1;
    let bc1 = 1.0 - BETA1.powi(state.step as i32);
    let bc2 = 1.0 - BETA2.powi(state.step as i32);
    for (t, p) in tensors.iter_mut().enumerate() {
        let (m, v) = (&mut state.first[t], &mut state.second[t]);
        for (i, x) in p.iter_mut().enumerate() {
            let g = grads[t][i];
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *x -= learning_rate * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    Ok(())
}
