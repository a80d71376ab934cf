//! Supervised source-domain training with true identity labels.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::augment::augment;
use crate::error::{Error, Result};
use crate::losses::ce_loss;
use crate::model::Network;
use crate::numcore::{AdamConfig, AdamState, GradBundle, Matrix, ParamId};
use crate::rng::{rng_for, streams};

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    /// Encoder widths, input first.
    pub dims: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub aug_noise_sigma: f64,
    pub aug_drop_prob: f64,
    pub seed: u64,
}

impl PretrainConfig {
    pub fn desk(input_dim: usize, seed: u64) -> Self {
        Self {
            dims: crate::model::default_dims(input_dim),
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            aug_noise_sigma: 0.05,
            aug_drop_prob: 0.1,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub network: Network,
    /// Mean training loss of each epoch.
    pub loss_history: Vec<f64>,
    /// Class-index remapping: `classes[c]` is the identity of head column `c`.
    pub classes: Vec<usize>,
}

/// Fraction of rows whose arg-max class equals the label.
pub fn classification_accuracy(network: &Network, data: &Matrix, labels: &[usize]) -> Result<f64> {
    if data.rows() == 0 {
        return Err(Error::Size("empty dataset".into()));
    }
    let probs = network.forward(data)?.probabilities;
    let correct = probs
        .row_iter()
        .zip(labels)
        .filter(|(row, &l)| {
            let best = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
            best.0 == l
        })
        .count();
    Ok(correct as f64 / data.rows() as f64)
}

/// Maps arbitrary identity labels to dense class indices in ascending order.
pub fn dense_labels(identities: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut index = BTreeMap::new();
    for &id in identities {
        index.entry(id).or_insert(0usize);
    }
    let classes: Vec<usize> = index.keys().copied().collect();
    for (c, v) in index.values_mut().enumerate() {
        *v = c;
    }
    (identities.iter().map(|id| index[id]).collect(), classes)
}

/// Trains encoder and a fresh head with cross entropy on true identities.
pub fn pretrain_source(data: &Matrix, identities: &[usize], config: &PretrainConfig) -> Result<PretrainOutcome> {
    if identities.len() != data.rows() {
        return Err(Error::Dimension {
            op: "pretrain_source",
            left: data.shape(),
            right: (identities.len(), 1),
        });
    }
    if data.rows() == 0 {
        return Err(Error::Size("pretraining needs labelled samples".into()));
    }
    if config.dims.first() != Some(&data.cols()) {
        return Err(Error::Parameter(format!(
            "encoder input width {:?} does not match data width {}",
            config.dims.first(),
            data.cols()
        )));
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::Parameter("batch_size and learning_rate must be positive".into()));
    }
    let (labels, classes) = dense_labels(identities);
    let mut init_rng = rng_for(config.seed, streams::INIT);
    let mut network = Network::random(&config.dims, classes.len(), &mut init_rng)?;
    let mut adam = AdamState::new(&AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    });
    let mut batch_rng = rng_for(config.seed, streams::PRETRAIN_BATCHES);
    let mut aug_rng = rng_for(config.seed, streams::AUGMENT);
    let mut order: Vec<usize> = (0..data.rows()).collect();
    let mut loss_history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut batch_rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let x = augment(
                &data.select_rows(chunk)?,
                config.aug_noise_sigma,
                config.aug_drop_prob,
                &mut aug_rng,
            );
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let out = network.forward(&x)?;
            let (loss, g_logits) = ce_loss(&out.probabilities, &y)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite pretraining loss {loss}")));
            }
            let (g_head, g_feat) = network.head.backward(&out.features, &g_logits)?;
            let layers = network.encoder.backward(&out.cache, &g_feat)?;
            let mut bundle = GradBundle::new(loss);
            for (i, l) in layers.into_iter().enumerate() {
                bundle.gradients.insert(ParamId::EncoderWeight(i), l.weight);
                bundle.gradients.insert(ParamId::EncoderBias(i), l.bias);
            }
            bundle.gradients.insert(ParamId::HeadWeight, g_head);
            adam.apply(network.params_mut(), &bundle)?;
            total += loss;
            batches += 1;
        }
        loss_history.push(total / batches as f64);
    }
    Ok(PretrainOutcome {
        network,
        loss_history,
        classes,
    })
}
