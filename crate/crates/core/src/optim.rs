//! First-order optimizers operating on a coefficient matrix in place.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::CoefMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Adamax,
    Amsgrad,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            "adamax" => Ok(Self::Adamax),
            "amsgrad" => Ok(Self::Amsgrad),
            other => Err(Error::Config(format!(
                "unknown optimizer `{other}` (expected sgd, adam, adamax or amsgrad)"
            ))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sgd => "sgd",
            Self::Adam => "adam",
            Self::Adamax => "adamax",
            Self::Amsgrad => "amsgrad",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// SGD only.
    pub momentum: f64,
    /// SGD only; requires `momentum > 0`.
    pub nesterov: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate: 0.1,
            momentum: 0.0,
            nesterov: false,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64, momentum: f64, nesterov: bool) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            momentum,
            nesterov,
            ..Self::default()
        }
    }

    pub fn adaptive(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")))
            }
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        unit("momentum", self.momentum)?;
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.nesterov && self.momentum == 0.0 {
            return Err(Error::Config("nesterov requires momentum > 0".into()));
        }
        Ok(())
    }
}

/// Slot variables of one optimizer run. Slots that the configured kind does
/// not use stay empty.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    config: OptimizerConfig,
    step_count: u64,
    velocity: Option<CoefMatrix>,
    first_moment: Option<CoefMatrix>,
    second_moment: Option<CoefMatrix>,
    max_second_moment: Option<CoefMatrix>,
    inf_norm: Option<CoefMatrix>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, shape: (usize, usize)) -> Result<Self> {
        config.validate()?;
        let zeros = || Some(CoefMatrix::zeros(shape.0, shape.1));
        let mut state = Self {
            config,
            step_count: 0,
            velocity: None,
            first_moment: None,
            second_moment: None,
            max_second_moment: None,
            inf_norm: None,
        };
        match config.kind {
            OptimizerKind::Sgd => state.velocity = zeros(),
            OptimizerKind::Adam => {
                state.first_moment = zeros();
                state.second_moment = zeros();
            }
            OptimizerKind::Amsgrad => {
                state.first_moment = zeros();
                state.second_moment = zeros();
                state.max_second_moment = zeros();
            }
            OptimizerKind::Adamax => {
                state.first_moment = zeros();
                state.inf_norm = zeros();
            }
        }
        Ok(state)
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn velocity(&self) -> Option<&CoefMatrix> {
        self.velocity.as_ref()
    }

    pub fn first_moment(&self) -> Option<&CoefMatrix> {
        self.first_moment.as_ref()
    }

    pub fn second_moment(&self) -> Option<&CoefMatrix> {
        self.second_moment.as_ref()
    }

    /// Running maximum of the bias-corrected second moment (AMSGrad).
    pub fn max_second_moment(&self) -> Option<&CoefMatrix> {
        self.max_second_moment.as_ref()
    }

    pub fn inf_norm(&self) -> Option<&CoefMatrix> {
        self.inf_norm.as_ref()
    }

    /// Applies one update to `params`. A non-finite gradient entry is
    /// reported with its (segment, power) location and leaves everything
    /// untouched.
    pub fn step(&mut self, params: &mut CoefMatrix, grads: &CoefMatrix) -> Result<()> {
        if params.shape() != grads.shape() {
            return Err(Error::Config(format!(
                "gradient shape {:?} does not match parameters {:?}",
                grads.shape(),
                params.shape()
            )));
        }
        if let Some((segment, power)) = grads.first_non_finite() {
            return Err(Error::NonFiniteGradient { segment, power });
        }
        self.step_count += 1;
        let c = self.config;
        let lr = c.learning_rate;
        let t = self.step_count as i32;
        let theta = params.as_mut_slice();
        let g = grads.as_slice();

        match c.kind {
            OptimizerKind::Sgd => {
                let v = self.velocity.as_mut().expect("sgd velocity slot").as_mut_slice();
                for ((p, v), &g) in theta.iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = c.momentum * *v - lr * g;
                    if c.nesterov {
                        *p += c.momentum * *v - lr * g;
                    } else {
                        *p += *v;
                    }
                }
            }
            OptimizerKind::Adam | OptimizerKind::Amsgrad => {
                let bc1 = 1.0 - c.beta1.powi(t);
                let bc2 = 1.0 - c.beta2.powi(t);
                let m = self.first_moment.as_mut().expect("first moment slot").as_mut_slice();
                let v = self.second_moment.as_mut().expect("second moment slot").as_mut_slice();
                let mut vmax = self.max_second_moment.as_mut().map(CoefMatrix::as_mut_slice);
                for idx in 0..theta.len() {
                    m[idx] = c.beta1 * m[idx] + (1.0 - c.beta1) * g[idx];
                    v[idx] = c.beta2 * v[idx] + (1.0 - c.beta2) * g[idx] * g[idx];
                    let m_hat = m[idx] / bc1;
                    let mut v_hat = v[idx] / bc2;
                    if let Some(vmax) = vmax.as_deref_mut() {
                        vmax[idx] = vmax[idx].max(v_hat);
                        v_hat = vmax[idx];
                    }
                    theta[idx] -= lr * m_hat / (v_hat.sqrt() + c.epsilon);
                }
            }
            OptimizerKind::Adamax => {
                let bc1 = 1.0 - c.beta1.powi(t);
                let m = self.first_moment.as_mut().expect("first moment slot").as_mut_slice();
                let u = self.inf_norm.as_mut().expect("inf norm slot").as_mut_slice();
                for idx in 0..theta.len() {
                    m[idx] = c.beta1 * m[idx] + (1.0 - c.beta1) * g[idx];
                    u[idx] = (c.beta2 * u[idx]).max(g[idx].abs());
                    theta[idx] -= lr / bc1 * m[idx] / (u[idx] + c.epsilon);
                }
            }
        }
        Ok(())
    }
}
