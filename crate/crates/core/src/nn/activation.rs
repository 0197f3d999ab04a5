//! Element-wise activation functions and their derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// ELU and leaky ReLU slope when none is given.
pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
    Elu { alpha: f64 },
    #[default]
    Relu,
    LeakyRelu { alpha: f64 },
}


impl ActivationKind {
    pub fn elu() -> Self {
        ActivationKind::Elu { alpha: DEFAULT_ALPHA }
    }

    pub fn leaky_relu() -> Self {
        ActivationKind::LeakyRelu { alpha: DEFAULT_ALPHA }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ActivationKind::Elu { alpha } | ActivationKind::LeakyRelu { alpha } if !(alpha > 0.0) => {
                Err(Error::param(format!("activation alpha must be > 0, got {alpha}")))
            }
            _ => Ok(()),
        }
    }

    /// True if the derivative is discontinuous at 0.
    pub fn has_kink(&self) -> bool {
        matches!(self, ActivationKind::Relu | ActivationKind::LeakyRelu { .. })
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Elu { alpha } => {
                if x > 0.0 {
                    x
                } else {
                    alpha * x.exp_m1()
                }
            }
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::LeakyRelu { alpha } => {
                if x > 0.0 {
                    x
                } else {
                    alpha * x
                }
            }
        }
    }

    /// Derivative at `x`. ReLU and leaky ReLU take the left branch at 0.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            ActivationKind::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            // ELU(x) + alpha on the negative branch
            ActivationKind::Elu { alpha } => {
                if x > 0.0 {
                    1.0
                } else {
                    alpha * x.exp()
                }
            }
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::LeakyRelu { alpha } => {
                if x > 0.0 {
                    1.0
                } else {
                    alpha
                }
            }
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activate(kind: ActivationKind, x: &Tensor) -> Result<Tensor> {
    kind.validate()?;
    Ok(x.map(|v| kind.apply(v)))
}

pub fn activate_grad(kind: ActivationKind, x: &Tensor) -> Result<Tensor> {
    kind.validate()?;
    Ok(x.map(|v| kind.derivative(v)))
}
