use serde::{Deserialize, Serialize};

use super::ParamVec;
use crate::{Error, Result};

/// Plain SGD hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
}

impl SgdConfig {
    pub fn new(learning_rate: f64, batch_size: usize) -> Self {
        SgdConfig { learning_rate, momentum: 0.0, weight_decay: 0.0, clip_norm: 10.0, batch_size }
    }

    pub fn with_momentum(mut self, momentum: f64) -> Self {
        self.momentum = momentum;
        self
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn with_clip(mut self, clip_norm: f64) -> Self {
        self.clip_norm = clip_norm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        // lr = 0 is allowed: it is how no-op clients are expressed.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be >= 0", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight decay {} must be >= 0", self.weight_decay)));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config(format!("clip threshold {} must be > 0", self.clip_norm)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("minibatch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Velocity buffer for momentum SGD. Starts empty and is sized on first use.
#[derive(Debug, Clone, Default)]
pub struct Momentum {
    velocity: Vec<f64>,
}

impl Momentum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }
}

/// One optimizer step, in place.
///
/// The gradient is clipped by global norm, weight decay is added as an L2
/// term, then the classical momentum update `v = mu v + g; theta -= lr v`.
/// A non-finite gradient aborts the step without touching the parameters.
pub fn sgd_step(params: &mut ParamVec, grad: &ParamVec, cfg: &SgdConfig, state: &mut Momentum) -> Result<()> {
    params.check_layout(grad)?;
    if !grad.is_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    let norm = grad.norm();
    let scale = if norm > cfg.clip_norm { cfg.clip_norm / norm } else { 1.0 };
    if state.velocity.len() != params.len() {
        state.velocity = vec![0.0; params.len()];
    }
    let (lr, mu, wd) = (cfg.learning_rate, cfg.momentum, cfg.weight_decay);
    for ((theta, &g), v) in params.values_mut().iter_mut().zip(grad.values()).zip(&mut state.velocity) {
        let g = g * scale + wd * *theta;
        *v = mu * *v + g;
        *theta -= lr * *v;
    }
    Ok(())
}
