//! First-order optimizers over a model's flat parameter vector.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Trainable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn tag(self) -> u8 {
        match self {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(OptimizerKind::Sgd),
            1 => Some(OptimizerKind::Adam),
            _ => None,
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::InvalidConfig(format!("unknown optimizer `{other}`"))),
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Optimizer with its running state.
///
/// Adam keeps first and second moment estimates `m`, `v` and the step count;
/// plain SGD keeps nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, num_params: usize) -> Self {
        let state = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => num_params,
        };
        Self {
            kind,
            learning_rate,
            step: 0,
            m: vec![0.0; state],
            v: vec![0.0; state],
        }
    }

    /// Applies one update to `params` given the gradient of the loss.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != grad.len() {
            return Err(Error::dim("gradient", params.len(), grad.len()));
        }
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                if self.m.len() != params.len() {
                    return Err(Error::dim("optimizer state", self.m.len(), params.len()));
                }
                self.step += 1;
                let bc1 = 1.0 - ADAM_BETA1.powf(self.step as f64);
                let bc2 = 1.0 - ADAM_BETA2.powf(self.step as f64);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grad)
                    .zip(self.m.iter_mut())
                    .zip(self.v.iter_mut())
                {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
        Ok(())
    }

    /// Updates the model's parameter blocks in canonical order.
    pub fn step_model<M: Trainable + ?Sized>(&mut self, model: &mut M, grad: &[f64]) -> Result<()> {
        let mut flat = model.flat_params();
        self.update(&mut flat, grad)?;
        model.set_flat_params(&flat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step() {
        let mut o = Optimizer::new(OptimizerKind::Sgd, 0.1, 2);
        let mut p = vec![1.0, -1.0];
        o.update(&mut p, &[2.0, -4.0]).unwrap();
        assert_eq!(p, vec![0.8, -0.6]);
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let mut o = Optimizer::new(OptimizerKind::Adam, 1e-3, 3);
        let mut p = vec![0.0; 3];
        o.update(&mut p, &[0.5, -20.0, 0.0]).unwrap();
        assert!((p[0] + 1e-3).abs() < 1e-10);
        assert!((p[1] - 1e-3).abs() < 1e-10);
        assert_eq!(p[2], 0.0);
        assert_eq!(o.step, 1);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut o = Optimizer::new(kind, 0.0, 2);
            let mut p = vec![0.3, 0.7];
            o.update(&mut p, &[1.0, -2.0]).unwrap();
            assert_eq!(p, vec![0.3, 0.7]);
        }
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut o = Optimizer::new(OptimizerKind::Adam, 0.05, 1);
        let mut p = vec![3.0];
        for _ in 0..2_000 {
            let g = 2.0 * (p[0] - 1.0);
            o.update(&mut p, &[g]).unwrap();
        }
        assert!((p[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn shape_mismatch() {
        let mut o = Optimizer::new(OptimizerKind::Adam, 0.1, 2);
        assert!(o.update(&mut [0.0; 2], &[1.0]).is_err());
        assert!(o.update(&mut [0.0; 3], &[1.0; 3]).is_err());
    }
}
