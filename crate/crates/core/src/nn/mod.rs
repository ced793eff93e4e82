//! Minimal neural-network engine: flat parameter vectors, a feedforward
//! classifier, an LSTM language model, momentum SGD and checkpoints.

pub mod checkpoint;
mod ffn;
mod lstm;
mod params;
mod sgd;

pub use ffn::FeedforwardClassifier;
pub use lstm::{HiddenState, LmBatch, LmLossGrad, LmShape, RecurrentLM};
pub use params::{Layout, ParamVec, TensorSpec};
pub use sgd::{sgd_step, Momentum, SgdConfig};

use crate::{Error, Result};

/// Any model whose weights live in a single [`ParamVec`].
pub trait Network: Clone + Send + Sync {
    fn params(&self) -> &ParamVec;

    /// Mutable weights for in-place optimizer steps. The layout is fixed.
    fn params_mut(&mut self) -> &mut ParamVec;

    /// Same architecture with different weights.
    fn with_params(&self, params: ParamVec) -> Result<Self>;

    fn param_count(&self) -> usize {
        self.params().len()
    }
}

/// What the cross-entropy loss is taken against.
///
/// `Mixed` targets are `lambda * onehot(label) + (1 - lambda) * mean_k p(.|teacher_k)`;
/// with one teacher this is the learning-without-forgetting target, with
/// `lambda = 0` and many teachers it is ensemble distillation.
#[derive(Debug, Clone, Copy)]
pub enum TargetSpec<'a, M> {
    Hard,
    Mixed { lambda: f64, teachers: &'a [M] },
}

impl<'a, M: Network> TargetSpec<'a, M> {
    /// Checks `lambda` and teacher layouts. Returns the teachers that actually
    /// contribute (none when `lambda == 1`).
    pub(crate) fn resolve(&self, student: &ParamVec) -> Result<(f64, &'a [M])> {
        match *self {
            TargetSpec::Hard => Ok((1.0, &[])),
            TargetSpec::Mixed { lambda, teachers } => {
                if !(0.0..=1.0).contains(&lambda) {
                    return Err(Error::Config(format!("lambda {lambda} outside [0, 1]")));
                }
                if lambda == 1.0 {
                    return Ok((1.0, &[]));
                }
                if teachers.is_empty() {
                    return Err(Error::Config("soft targets need at least one reference model".into()));
                }
                for t in teachers {
                    if !t.params().same_layout(student) {
                        return Err(Error::Layout("reference model layout differs from the trained model".into()));
                    }
                }
                Ok((lambda, teachers))
            }
        }
    }
}

/// Apply inverted dropout to `x` in place and return the mask (already
/// scaled by `1 / (1 - p)`), or `None` when no dropout happens.
pub(crate) fn dropout_mask(x: &mut [f64], p: f64, rng: Option<&mut crate::rng::Rng>) -> Option<Vec<f64>> {
    use rand::Rng as _;
    let rng = rng?;
    if p <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    for (v, m) in x.iter_mut().zip(&mask) {
        *v *= m;
    }
    Some(mask)
}

pub(crate) fn apply_mask(x: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(mask) = mask {
        for (v, m) in x.iter_mut().zip(mask) {
            *v *= m;
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[0.1, 0.5, 0.5, 0.2]), 1);
        assert_eq!(argmax(&[0.3, 0.3]), 0);
    }

    #[test]
    fn dropout_is_inverted() {
        let mut rng = crate::rng::seeded(1);
        let mut x = vec![1.0; 10_000];
        let mask = dropout_mask(&mut x, 0.5, Some(&mut rng)).unwrap();
        assert!(mask.iter().all(|&m| m == 0.0 || m == 2.0));
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        assert!((mean - 1.0).abs() < 0.05);
        let mut y = vec![1.0; 4];
        assert!(dropout_mask(&mut y, 0.5, None).is_none());
        assert_eq!(y, vec![1.0; 4]);
    }
}
