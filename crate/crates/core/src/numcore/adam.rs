//! Adam with bias correction.

use std::collections::BTreeMap;

use super::grad::{GradBundle, ParamId};
use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3.5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    first: Matrix,
    second: Matrix,
}

/// Optimizer state for one network: a shared step counter plus first and
/// second moments per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    moments: BTreeMap<ParamId, Moments>,
}

impl AdamState {
    pub fn new(config: &AdamConfig) -> Self {
        Self {
            step: 0,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            learning_rate: config.learning_rate,
            moments: BTreeMap::new(),
        }
    }

    pub fn first_moment(&self, id: ParamId) -> Option<&Matrix> {
        self.moments.get(&id).map(|m| &m.first)
    }

    pub fn second_moment(&self, id: ParamId) -> Option<&Matrix> {
        self.moments.get(&id).map(|m| &m.second)
    }

    /// Advances the step counter and updates every parameter that has a
    /// gradient in `grads`. Parameters without a gradient are left alone.
    pub fn apply<'a>(
        &mut self,
        params: impl IntoIterator<Item = (ParamId, &'a mut Matrix)>,
        grads: &GradBundle,
    ) -> Result<()> {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powf(self.step as f64);
        let bc2 = 1.0 - self.beta2.powf(self.step as f64);
        for (id, param) in params {
            let Some(grad) = grads.get(id) else { continue };
            if grad.shape() != param.shape() {
                return Err(Error::Dimension {
                    op: "adam_step",
                    left: param.shape(),
                    right: grad.shape(),
                });
            }
            let moments = self.moments.entry(id).or_insert_with(|| Moments {
                first: Matrix::zeros(param.rows(), param.cols()),
                second: Matrix::zeros(param.rows(), param.cols()),
            });
            if moments.first.shape() != param.shape() {
                // the classifier head changes width at every re-clustering
                moments.first = Matrix::zeros(param.rows(), param.cols());
                moments.second = Matrix::zeros(param.rows(), param.cols());
            }
            let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
            let m = moments.first.data_mut();
            let v = moments.second.data_mut();
            for (((p, &g), m), v) in param.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Drops the moments of one parameter, e.g. after it has been replaced.
    pub fn reset(&mut self, id: ParamId) {
        self.moments.remove(&id);
    }
}

/// Functional single-matrix form: returns the advanced state and the
/// updated parameters, leaving the inputs untouched.
pub fn adam_step(state: &AdamState, params: &Matrix, grads: &Matrix) -> Result<(AdamState, Matrix)> {
    if params.shape() != grads.shape() {
        return Err(Error::Dimension {
            op: "adam_step",
            left: params.shape(),
            right: grads.shape(),
        });
    }
    let mut next = state.clone();
    let mut p = params.clone();
    let mut bundle = GradBundle::new(0.0);
    bundle.gradients.insert(ParamId::HeadWeight, grads.clone());
    next.apply([(ParamId::HeadWeight, &mut p)], &bundle)?;
    Ok((next, p))
}
