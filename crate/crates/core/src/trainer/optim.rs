use super::config::OptimizerKind;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const RMSPROP_RHO: f64 = 0.99;
pub const RMSPROP_EPS: f64 = 1e-8;

/// Per-parameter optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, t: u64 },
    RmsProp { sq: Vec<f64> },
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => OptimizerState::Sgd,
            OptimizerKind::Adam => OptimizerState::Adam {
                m: vec![0.0; n_params],
                v: vec![0.0; n_params],
                t: 0,
            },
            OptimizerKind::Rmsprop => OptimizerState::RmsProp {
                sq: vec![0.0; n_params],
            },
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        match self {
            OptimizerState::Sgd => OptimizerKind::Sgd,
            OptimizerState::Adam { .. } => OptimizerKind::Adam,
            OptimizerState::RmsProp { .. } => OptimizerKind::Rmsprop,
        }
    }

    /// Apply one update in place. A non-finite gradient leaves `params`
    /// untouched and returns an error.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} params but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient coordinate {i}")));
        }
        match self {
            OptimizerState::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerState::Adam { m, v, t } => {
                if m.len() != params.len() {
                    return Err(Error::Shape("optimizer state size".into()));
                }
                *t += 1;
                let bias1 = 1.0 - ADAM_BETA1.powi(*t as i32);
                let bias2 = 1.0 - ADAM_BETA2.powi(*t as i32);
                for i in 0..params.len() {
                    let g = grads[i];
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = m[i] / bias1;
                    let v_hat = v[i] / bias2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
            OptimizerState::RmsProp { sq } => {
                if sq.len() != params.len() {
                    return Err(Error::Shape("optimizer state size".into()));
                }
                for i in 0..params.len() {
                    let g = grads[i];
                    sq[i] = RMSPROP_RHO * sq[i] + (1.0 - RMSPROP_RHO) * g * g;
                    params[i] -= lr * g / (sq[i].sqrt() + RMSPROP_EPS);
                }
            }
        }
        Ok(())
    }
}
