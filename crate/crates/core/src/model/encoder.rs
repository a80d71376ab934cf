use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numcore::{dot, row_norm, Matrix, NORM_FLOOR};
use crate::rng::Rng;

/// One affine layer: `weight` is `in × out`, `bias` is `1 × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(input, output),
            bias: Matrix::zeros(1, output),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(input: usize, output: usize, rng: &mut Rng) -> Self {
        let a = (6.0 / (input + output) as f64).sqrt();
        Self {
            weight: Matrix::from_fn(input, output, |_, _| rng.random_range(-a..a)),
            bias: Matrix::zeros(1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// MLP encoder: tanh between layers, linear last layer, then row-wise L2
/// normalization. The output is the embedding used for every similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<DenseLayer>,
}

/// Intermediate values kept by the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    /// Input to each layer (the batch, then each hidden activation).
    layer_inputs: Vec<Matrix>,
    /// Output of the last layer before normalization.
    raw: Matrix,
    features: Matrix,
}

impl EncoderCache {
    pub fn features(&self) -> &Matrix {
        &self.features
    }
}

impl EncoderParams {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Validation("encoder needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.shape() != (1, l.output_dim()) {
                return Err(Error::Validation(format!(
                    "layer {i} bias shape {:?} does not match width {}",
                    l.bias.shape(),
                    l.output_dim()
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Validation(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Random encoder with layer widths `dims` (input first, feature last).
    pub fn random(dims: &[usize], rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Parameter(format!("invalid encoder widths {dims:?}")));
        }
        Self::from_layers(dims.windows(2).map(|w| DenseLayer::glorot(w[0], w[1], rng)).collect())
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(DenseLayer::output_dim));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn forward(&self, batch: &Matrix) -> Result<(Matrix, EncoderCache)> {
        if batch.cols() != self.input_dim() {
            return Err(Error::Dimension {
                op: "forward_features",
                left: batch.shape(),
                right: self.layers[0].weight.shape(),
            });
        }
        let last = self.layers.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut current = batch.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = current.matmul(&layer.weight)?.add_row_broadcast(&layer.bias)?;
            layer_inputs.push(current);
            current = if i == last { z } else { z.map(f64::tanh) };
        }
        let raw = current;
        let features = crate::numcore::l2_normalize_rows(&raw);
        let cache = EncoderCache {
            layer_inputs,
            raw,
            features: features.clone(),
        };
        Ok((features, cache))
    }

    /// Gradients of a scalar loss w.r.t. every layer, given its gradient
    /// w.r.t. the normalized features.
    pub fn backward(&self, cache: &EncoderCache, grad_features: &Matrix) -> Result<Vec<DenseLayer>> {
        if grad_features.shape() != cache.features.shape() {
            return Err(Error::Dimension {
                op: "encoder_backward",
                left: cache.features.shape(),
                right: grad_features.shape(),
            });
        }
        // through the normalization: dz = (df − f·(f·df)) / ‖z‖
        let mut delta = Matrix::zeros(cache.raw.rows(), cache.raw.cols());
        for r in 0..delta.rows() {
            let norm = row_norm(cache.raw.row(r));
            let df = grad_features.row(r);
            let out = delta.row_mut(r);
            if norm > NORM_FLOOR {
                let f = cache.features.row(r);
                let proj = dot(f, df);
                for ((o, &fi), &dfi) in out.iter_mut().zip(f).zip(df) {
                    *o = (dfi - fi * proj) / norm;
                }
            } else {
                for (o, &dfi) in out.iter_mut().zip(df) {
                    *o = dfi / NORM_FLOOR;
                }
            }
        }

        let mut grads: Vec<DenseLayer> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.layer_inputs[i];
            grads.push(DenseLayer {
                weight: input.t_matmul(&delta)?,
                bias: delta.sum_rows(),
            });
            if i > 0 {
                // input is tanh output of layer i-1
                let upstream = delta.matmul_t(&layer.weight)?;
                delta = Matrix::from_fn(upstream.rows(), upstream.cols(), |r, c| {
                    let a = input.get(r, c);
                    upstream.get(r, c) * (1.0 - a * a)
                });
            }
        }
        grads.reverse();
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::finite_diff_check;
    use crate::rng::rng_for;

    #[test]
    fn identity_layer_passes_unit_rows_through() {
        let enc = EncoderParams::from_layers(vec![DenseLayer {
            weight: Matrix::identity(3),
            bias: Matrix::zeros(1, 3),
        }])
        .unwrap();
        let x = crate::numcore::l2_normalize_rows(
            &Matrix::from_rows(&[[1.0, 2.0, 2.0], [0.0, -1.0, 0.0]]).unwrap(),
        );
        let (f, _) = enc.forward(&x).unwrap();
        assert!(f.max_abs_diff(&x).unwrap() < 1e-15);
    }

    #[test]
    fn outputs_have_unit_rows() {
        let mut rng = rng_for(3, 0);
        let enc = EncoderParams::random(&[5, 7, 4], &mut rng).unwrap();
        let x = Matrix::from_fn(9, 5, |r, c| ((r * 5 + c) as f64 * 0.37).sin() * 3.0);
        let (f, _) = enc.forward(&x).unwrap();
        for r in f.row_iter() {
            assert!((row_norm(r) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_batch() {
        let mut rng = rng_for(3, 0);
        let enc = EncoderParams::random(&[5, 7, 4], &mut rng).unwrap();
        let (f, _) = enc.forward(&Matrix::zeros(0, 5)).unwrap();
        assert_eq!(f.shape(), (0, 4));
    }

    #[test]
    fn width_mismatch() {
        let mut rng = rng_for(3, 0);
        let enc = EncoderParams::random(&[5, 4], &mut rng).unwrap();
        assert!(matches!(enc.forward(&Matrix::zeros(2, 6)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn broken_chain_rejected() {
        let layers = vec![DenseLayer::zeros(3, 4), DenseLayer::zeros(5, 2)];
        assert!(EncoderParams::from_layers(layers).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = rng_for(11, 0);
        let enc = EncoderParams::random(&[4, 6, 3], &mut rng).unwrap();
        let x = Matrix::from_fn(5, 4, |r, c| ((r * 4 + c) as f64 * 0.91).cos());
        let target = Matrix::from_fn(5, 3, |r, c| ((r + 3 * c) as f64 * 0.5).sin());
        // smooth downstream loss: sum(target ⊙ f) + 0.5·sum(f⁴)
        let loss = |e: &EncoderParams| {
            let (f, _) = e.forward(&x).unwrap();
            f.data()
                .iter()
                .zip(target.data())
                .map(|(a, t)| a * t + 0.5 * a.powi(4))
                .sum::<f64>()
        };
        let (f, cache) = enc.forward(&x).unwrap();
        let df = Matrix::from_fn(5, 3, |r, c| target.get(r, c) + 2.0 * f.get(r, c).powi(3));
        let grads = enc.backward(&cache, &df).unwrap();
        for (li, g) in grads.iter().enumerate() {
            let err_w = finite_diff_check(
                |w| {
                    let mut e = enc.clone();
                    e.layers[li].weight = w.clone();
                    loss(&e)
                },
                &enc.layers[li].weight,
                &g.weight,
                1e-5,
            )
            .unwrap();
            let err_b = finite_diff_check(
                |b| {
                    let mut e = enc.clone();
                    e.layers[li].bias = b.clone();
                    loss(&e)
                },
                &enc.layers[li].bias,
                &g.bias,
                1e-5,
            )
            .unwrap();
            assert!(err_w < 1e-6 && err_b < 1e-6, "layer {li}: {err_w} {err_b}");
        }
    }
}
