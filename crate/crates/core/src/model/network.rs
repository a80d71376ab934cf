use crate::error::{Error, Result};
use crate::numcore::{row_norm, row_softmax, Matrix, ParamId};
use crate::rng::Rng;

use super::encoder::{EncoderCache, EncoderParams};

/// Linear classifier over features: `weight` is `feature_dim × C`, column
/// `c` scores class `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub weight: Matrix,
}

impl ClassifierHead {
    pub fn zeros(feature_dim: usize, classes: usize) -> Self {
        Self {
            weight: Matrix::zeros(feature_dim, classes),
        }
    }

    /// Head whose column `c` is row `c` of `means` (`C × feature_dim`, unit rows).
    pub fn from_means(means: &Matrix) -> Result<Self> {
        for (c, row) in means.row_iter().enumerate() {
            let n = row_norm(row);
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::Validation(format!(
                    "cluster mean {c} has norm {n}, expected unit rows"
                )));
            }
        }
        means.ensure_finite("cluster means")?;
        Ok(Self {
            weight: means.transpose(),
        })
    }

    pub fn class_count(&self) -> usize {
        self.weight.cols()
    }

    pub fn feature_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn logits(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.feature_dim() {
            return Err(Error::Dimension {
                op: "forward_logits",
                left: features.shape(),
                right: self.weight.shape(),
            });
        }
        features.matmul(&self.weight)
    }

    /// Class probabilities `softmax(features × weight)` at temperature 1.
    pub fn forward(&self, features: &Matrix) -> Result<Matrix> {
        row_softmax(&self.logits(features)?, 1.0)
    }

    /// Returns `(∂/∂weight, ∂/∂features)` from the gradient w.r.t. logits.
    pub fn backward(&self, features: &Matrix, grad_logits: &Matrix) -> Result<(Matrix, Matrix)> {
        let gw = features.t_matmul(grad_logits)?;
        let gf = grad_logits.matmul_t(&self.weight)?;
        Ok((gw, gf))
    }
}

/// Encoder plus classifier head: one parameter set (θ or Θ).
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub encoder: EncoderParams,
    pub head: ClassifierHead,
}

/// Output of a full forward pass.
#[derive(Debug, Clone)]
pub struct NetworkOutput {
    pub features: Matrix,
    pub probabilities: Matrix,
    pub cache: EncoderCache,
}

impl Network {
    pub fn random(dims: &[usize], classes: usize, rng: &mut Rng) -> Result<Self> {
        let encoder = EncoderParams::random(dims, rng)?;
        let head = ClassifierHead::zeros(encoder.feature_dim(), classes);
        Ok(Self { encoder, head })
    }

    pub fn new(encoder: EncoderParams, head: ClassifierHead) -> Result<Self> {
        if head.feature_dim() != encoder.feature_dim() {
            return Err(Error::Validation(format!(
                "head expects {} features, encoder produces {}",
                head.feature_dim(),
                encoder.feature_dim()
            )));
        }
        Ok(Self { encoder, head })
    }

    pub fn forward(&self, batch: &Matrix) -> Result<NetworkOutput> {
        let (features, cache) = self.encoder.forward(batch)?;
        let probabilities = self.head.forward(&features)?;
        Ok(NetworkOutput {
            features,
            probabilities,
            cache,
        })
    }

    pub fn features(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(self.encoder.forward(batch)?.0)
    }

    pub fn params(&self) -> Vec<(ParamId, &Matrix)> {
        let mut out = Vec::with_capacity(2 * self.encoder.layers.len() + 1);
        for (i, l) in self.encoder.layers.iter().enumerate() {
            out.push((ParamId::EncoderWeight(i), &l.weight));
            out.push((ParamId::EncoderBias(i), &l.bias));
        }
        out.push((ParamId::HeadWeight, &self.head.weight));
        out
    }

    pub fn params_mut(&mut self) -> Vec<(ParamId, &mut Matrix)> {
        let mut out = Vec::with_capacity(2 * self.encoder.layers.len() + 1);
        for (i, l) in self.encoder.layers.iter_mut().enumerate() {
            out.push((ParamId::EncoderWeight(i), &mut l.weight));
            out.push((ParamId::EncoderBias(i), &mut l.bias));
        }
        out.push((ParamId::HeadWeight, &mut self.head.weight));
        out
    }

    pub fn param(&self, id: ParamId) -> Option<&Matrix> {
        match id {
            ParamId::EncoderWeight(i) => self.encoder.layers.get(i).map(|l| &l.weight),
            ParamId::EncoderBias(i) => self.encoder.layers.get(i).map(|l| &l.bias),
            ParamId::HeadWeight => Some(&self.head.weight),
        }
    }

    pub fn param_mut(&mut self, id: ParamId) -> Option<&mut Matrix> {
        match id {
            ParamId::EncoderWeight(i) => self.encoder.layers.get_mut(i).map(|l| &mut l.weight),
            ParamId::EncoderBias(i) => self.encoder.layers.get_mut(i).map(|l| &mut l.bias),
            ParamId::HeadWeight => Some(&mut self.head.weight),
        }
    }

    pub fn same_shape(&self, other: &Network) -> bool {
        let a = self.params();
        let b = other.params();
        a.len() == b.len() && a.iter().zip(&b).all(|((ia, ma), (ib, mb))| ia == ib && ma.shape() == mb.shape())
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|(_, m)| m.is_finite())
    }

    /// Largest absolute parameter difference; `None` when shapes differ.
    pub fn max_param_diff(&self, other: &Network) -> Option<f64> {
        if !self.same_shape(other) {
            return None;
        }
        Some(
            self.params()
                .iter()
                .zip(other.params())
                .map(|((_, a), (_, b))| a.max_abs_diff(b).unwrap_or(f64::INFINITY))
                .fold(0.0, f64::max),
        )
    }
}

/// A student network and its temporal-average teacher.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkPair {
    pub student: Network,
    pub teacher: Network,
    pub ema_decay: f64,
    pub pair_id: usize,
}

impl NetworkPair {
    /// Student and teacher both start as copies of `pretrained`.
    pub fn from_pretrained(pretrained: &Network, ema_decay: f64, pair_id: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&ema_decay) {
            return Err(Error::Parameter(format!("ema decay {ema_decay} outside [0, 1]")));
        }
        Ok(Self {
            student: pretrained.clone(),
            teacher: pretrained.clone(),
            ema_decay,
            pair_id,
        })
    }

    /// `Θ ← decay·Θ + (1 − decay)·θ` for every parameter, head included.
    pub fn ema_update(&mut self) -> Result<()> {
        if !self.student.same_shape(&self.teacher) {
            return Err(Error::Internal(format!(
                "pair {}: student and teacher shapes differ",
                self.pair_id
            )));
        }
        let decay = self.ema_decay;
        let student = self.student.params();
        for ((_, t), (_, s)) in self.teacher.params_mut().into_iter().zip(student) {
            for (tv, &sv) in t.data_mut().iter_mut().zip(s.data()) {
                *tv = decay * *tv + (1.0 - decay) * sv;
            }
        }
        Ok(())
    }

    /// Replaces both classifier heads with `cluster_meansᵀ`.
    pub fn reinit_head(&mut self, cluster_means: &Matrix) -> Result<()> {
        if cluster_means.cols() != self.student.encoder.feature_dim() {
            return Err(Error::Dimension {
                op: "reinit_head",
                left: cluster_means.shape(),
                right: (cluster_means.rows(), self.student.encoder.feature_dim()),
            });
        }
        let head = ClassifierHead::from_means(cluster_means)?;
        self.student.head = head.clone();
        self.teacher.head = head;
        Ok(())
    }
}
