use std::collections::BTreeMap;
use std::fmt;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Identifies one trainable parameter matrix of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamId {
    EncoderWeight(usize),
    EncoderBias(usize),
    HeadWeight,
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamId::EncoderWeight(i) => write!(f, "encoder.{i}.weight"),
            ParamId::EncoderBias(i) => write!(f, "encoder.{i}.bias"),
            ParamId::HeadWeight => write!(f, "head.weight"),
        }
    }
}

/// A scalar loss value together with its gradient for every parameter.
#[derive(Debug, Clone, Default)]
pub struct GradBundle {
    pub value: f64,
    pub gradients: BTreeMap<ParamId, Matrix>,
}

impl GradBundle {
    pub fn new(value: f64) -> Self {
        Self {
            value,
            gradients: BTreeMap::new(),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.gradients.get(&id)
    }

    /// Accumulates `other` into `self`, summing values and gradients.
    pub fn accumulate(&mut self, other: &GradBundle) -> Result<()> {
        self.value += other.value;
        for (id, g) in &other.gradients {
            match self.gradients.get_mut(id) {
                Some(mine) => mine.add_assign(g)?,
                None => {
                    self.gradients.insert(*id, g.clone());
                }
            }
        }
        Ok(())
    }

    pub fn global_norm(&self) -> f64 {
        self.gradients
            .values()
            .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn check_shapes<'a>(&self, params: impl IntoIterator<Item = (ParamId, &'a Matrix)>) -> Result<()> {
        for (id, p) in params {
            if let Some(g) = self.gradients.get(&id) {
                if g.shape() != p.shape() {
                    return Err(Error::Internal(format!(
                        "gradient for {id} has shape {:?}, parameter has {:?}",
                        g.shape(),
                        p.shape()
                    )));
                }
            }
        }
        Ok(())
    }
}
