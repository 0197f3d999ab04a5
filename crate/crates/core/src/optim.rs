//! Plain SGD and Adam.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn default_lr() -> f64 {
    0.001
}
fn default_beta_1() -> f64 {
    0.9
}
fn default_beta_2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-7
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd {
        #[serde(default = "default_lr")]
        lr: f64,
    },
    Adam {
        #[serde(default = "default_lr")]
        lr: f64,
        #[serde(default = "default_beta_1")]
        beta_1: f64,
        #[serde(default = "default_beta_2")]
        beta_2: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
}

impl Default for OptimizerConfig {
    /// Adam with lr 0.001, beta_1 0.9, beta_2 0.999, epsilon 1e-7.
    fn default() -> Self {
        OptimizerConfig::Adam {
            lr: default_lr(),
            beta_1: default_beta_1(),
            beta_2: default_beta_2(),
            epsilon: default_epsilon(),
        }
    }
}

impl OptimizerConfig {
    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.lr();
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::param(format!("learning rate must be > 0, got {lr}")));
        }
        if let OptimizerConfig::Adam {
            beta_1,
            beta_2,
            epsilon,
            ..
        } = *self
        {
            for (name, b) in [("beta_1", beta_1), ("beta_2", beta_2)] {
                if !(b > 0.0 && b < 1.0) {
                    return Err(Error::param(format!("{name} must be in (0, 1), got {b}")));
                }
            }
            if !(epsilon > 0.0) {
                return Err(Error::param(format!("epsilon must be > 0, got {epsilon}")));
            }
        }
        Ok(())
    }
}

/// Optimizer with its per-parameter state.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    lr: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            lr: config.lr(),
            t: 0,
            m: vec![],
            v: vec![],
        })
    }

    pub fn sgd(lr: f64) -> Result<Self> {
        Self::new(OptimizerConfig::Sgd { lr })
    }

    pub fn adam() -> Self {
        Self::new(OptimizerConfig::default()).expect("defaults are valid")
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Adam first and second moments, empty before the first step.
    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::shape(format!(
                    "parameter {i} has shape {:?}, gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        match self.config {
            OptimizerConfig::Sgd { .. } => {
                sgd_step(self.lr, params, grads);
            }
            OptimizerConfig::Adam {
                beta_1,
                beta_2,
                epsilon,
                ..
            } => {
                if self.m.is_empty() {
                    self.m = grads.iter().map(|g| Tensor::filled(g.shape().to_vec(), 0.0)).collect();
                    self.v = self.m.clone();
                } else if self.m.len() != grads.len()
                    || self.m.iter().zip(grads).any(|(m, g)| m.shape() != g.shape())
                {
                    return Err(Error::State(
                        "parameter set changed between optimizer steps".into(),
                    ));
                }
                self.t += 1;
                let t = self.t as i32;
                let c1 = 1.0 - beta_1.powi(t);
                let c2 = 1.0 - beta_2.powi(t);
                let lr = self.lr;
                for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    for (((pv, &gv), mv), vv) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                    {
                        *mv = beta_1 * *mv + (1.0 - beta_1) * gv;
                        *vv = beta_2 * *vv + (1.0 - beta_2) * gv * gv;
                        let m_hat = *mv / c1;
                        let v_hat = *vv / c2;
                        *pv -= lr * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
                return Ok(());
            }
        }
        self.t += 1;
        Ok(())
    }
}

/// `p -= lr * g` for every parameter.
pub fn sgd_step(lr: f64, params: &mut [&mut Tensor], grads: &[Tensor]) {
    for (p, g) in params.iter_mut().zip(grads) {
        p.data_mut()
            .iter_mut()
            .zip(g.data())
            .for_each(|(pv, gv)| *pv -= lr * gv);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(&[1], vec![v]).unwrap()
    }

    #[test]
    fn sgd_arithmetic() {
        let mut opt = Optimizer::sgd(0.1).unwrap();
        let mut p = scalar(1.0);
        opt.step(&mut [&mut p], &[scalar(0.5)]).unwrap();
        assert_eq!(p.data()[0], 0.95);
        opt.step(&mut [&mut p], &[scalar(0.0)]).unwrap();
        assert_eq!(p.data()[0], 0.95);
    }

    #[test]
    fn sgd_two_steps_equal_summed_update() {
        let g = scalar(0.3);
        let mut a = scalar(2.0);
        let mut opt = Optimizer::sgd(0.5).unwrap();
        opt.step(&mut [&mut a], std::slice::from_ref(&g)).unwrap();
        opt.step(&mut [&mut a], std::slice::from_ref(&g)).unwrap();
        let mut b = scalar(2.0);
        Optimizer::sgd(0.5).unwrap().step(&mut [&mut b], &[scalar(0.6)]).unwrap();
        assert!((a.data()[0] - b.data()[0]).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step() {
        let mut opt = Optimizer::adam();
        let mut p = scalar(0.0);
        opt.step(&mut [&mut p], &[scalar(1.0)]).unwrap();
        let expected = -0.001 / (1.0 + 1e-7);
        assert!((p.data()[0] - expected).abs() < 1e-15);
        assert!((p.data()[0] + 0.0009999999).abs() < 1e-12);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let mut opt = Optimizer::adam();
        let mut p = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let before = p.clone();
        for _ in 0..5 {
            opt.step(&mut [&mut p], &[Tensor::new(&[3], 0.0).unwrap()]).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(opt.moments().0[0].shape(), &[3]);
    }

    #[test]
    fn validation() {
        assert!(Optimizer::sgd(0.0).is_err());
        let bad = OptimizerConfig::Adam {
            lr: 0.1,
            beta_1: 1.0,
            beta_2: 0.9,
            epsilon: 1e-7,
        };
        assert!(Optimizer::new(bad).is_err());
        let mut opt = Optimizer::adam();
        let mut p = scalar(0.0);
        assert!(opt.step(&mut [&mut p], &[Tensor::new(&[2], 0.0).unwrap()]).is_err());
    }
}
