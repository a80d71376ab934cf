//! Source pretraining and the mean-teaching adaptation loop.

mod augment;
mod config;
mod objective;
mod pretrain;
mod sampler;

use std::fmt::Write as _;

pub use augment::augment;
pub use config::TrainConfig;
pub use objective::{student_objective, ObjectiveOutput, ObjectiveWeights, TeacherTargets};
pub use pretrain::{classification_accuracy, dense_labels, pretrain_source, PretrainConfig, PretrainOutcome};
pub use sampler::pk_sample;

use crate::cluster::{relabel_epoch, PseudoLabeling};
use crate::error::{Error, Result};
use crate::evalkit::{evaluate, EvalResult, RetrievalSet};
use crate::losses::LossReport;
use crate::model::{Network, NetworkPair};
use crate::numcore::{AdamConfig, AdamState, Matrix, ParamId};
use crate::numfmt::sig9;
use crate::rng::{rng_for, streams, Rng};
use crate::synthdata::{Split, SyntheticDataset};

/// Retrieval metrics of one network on the query/gallery splits.
pub fn evaluate_network(network: &Network, dataset: &SyntheticDataset) -> Result<EvalResult> {
    let q = dataset.split(Split::Query);
    let g = dataset.split(Split::Gallery);
    let qf = network.features(&q.features)?;
    let gf = network.features(&g.features)?;
    evaluate(
        &RetrievalSet::new(&qf, &q.identities, &q.cameras)?,
        &RetrievalSet::new(&gf, &g.identities, &g.cameras)?,
    )
}

/// Losses and per-teacher metrics after one epoch. Epoch 0 holds the
/// pre-adaptation metrics with zero losses.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Means over the epoch's iterations.
    pub losses: LossReport,
    pub teachers: Vec<EvalResult>,
    /// Index of the teacher with the highest mAP (lowest index on ties).
    pub best_teacher: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricLog {
    pub records: Vec<EpochRecord>,
}

impl MetricLog {
    pub const CSV_HEADER: &'static str = "epoch,l_ce,l_mce,l_gcc,l_total,teacher_idx,map,rank1,rank5,rank10";

    /// One row per teacher per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let l = &r.losses;
            let losses = format!("{},{},{},{}", sig9(l.l_ce), sig9(l.l_mce), sig9(l.l_gcc), sig9(l.l_total));
            for (t, e) in r.teachers.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{losses},{t},{:.6},{:.6},{:.6},{:.6}",
                    r.epoch,
                    e.map,
                    e.rank1(),
                    e.rank5(),
                    e.rank10()
                );
            }
        }
        out
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Highest teacher mAP of the final epoch.
    pub fn final_best_map(&self) -> Option<f64> {
        let r = self.last()?;
        r.best_teacher.map(|t| r.teachers[t].map)
    }
}

fn best_teacher(results: &[EvalResult]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in results.iter().enumerate() {
        if best.is_none_or(|b| r.map > results[b].map) {
            best = Some(i);
        }
    }
    best
}

/// Everything that changes during adaptation.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub pairs: Vec<NetworkPair>,
    pub optimizers: Vec<AdamState>,
    pub labeling: Option<PseudoLabeling>,
    pub epoch: usize,
    /// Iterations completed over the whole run.
    pub iteration: usize,
    pub log: MetricLog,
    sampler_rng: Rng,
    augment_rng: Rng,
}

impl TrainState {
    pub fn new(config: &TrainConfig, pretrained: &[Network]) -> Result<Self> {
        config.validate()?;
        if pretrained.len() != config.pairs {
            return Err(Error::Parameter(format!(
                "config asks for {} pairs but {} checkpoints were given",
                config.pairs,
                pretrained.len()
            )));
        }
        let dims = pretrained[0].encoder.dims();
        if let Some(bad) = pretrained.iter().position(|n| n.encoder.dims() != dims) {
            return Err(Error::Validation(format!(
                "checkpoint {bad} has encoder widths {:?}, expected {:?}",
                pretrained[bad].encoder.dims(),
                dims
            )));
        }
        let pairs = pretrained
            .iter()
            .enumerate()
            .map(|(j, n)| NetworkPair::from_pretrained(n, config.ema_decay, j))
            .collect::<Result<Vec<_>>>()?;
        let adam = AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        };
        Ok(Self {
            optimizers: pairs.iter().map(|_| AdamState::new(&adam)).collect(),
            pairs,
            labeling: None,
            epoch: 0,
            iteration: 0,
            log: MetricLog::default(),
            sampler_rng: rng_for(config.seed, streams::SAMPLER),
            augment_rng: rng_for(config.seed, streams::AUGMENT),
        })
    }

    /// Clusters teacher features of `data`, re-initializes all heads, and
    /// drops the optimizer moments of the replaced heads.
    pub fn relabel(&mut self, config: &TrainConfig, data: &Matrix) -> Result<()> {
        let labeling = relabel_epoch(
            &mut self.pairs,
            data,
            config.cluster_count,
            config.kmeans_max_iters,
            config.seed,
            self.epoch,
        )?;
        for opt in &mut self.optimizers {
            opt.reset(ParamId::HeadWeight);
        }
        self.labeling = Some(labeling);
        Ok(())
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        for opt in &mut self.optimizers {
            opt.learning_rate = lr;
        }
    }

    pub fn teachers(&self) -> Vec<&Network> {
        self.pairs.iter().map(|p| &p.teacher).collect()
    }

    pub fn students(&self) -> Vec<&Network> {
        self.pairs.iter().map(|p| &p.student).collect()
    }
}

/// The sampled batch and the views each pair saw in the last iteration.
#[derive(Debug, Clone)]
pub struct IterationBatch {
    pub indices: Vec<usize>,
    pub labels: Vec<usize>,
    pub views: Vec<Matrix>,
}

/// Samples a batch and builds one independently augmented view per pair.
pub fn draw_batch(state: &mut TrainState, config: &TrainConfig, data: &Matrix) -> Result<IterationBatch> {
    let labeling = state
        .labeling
        .as_ref()
        .ok_or_else(|| Error::State("train_iteration called before the first relabeling".into()))?;
    if labeling.sample_count() != data.rows() {
        return Err(Error::State(format!(
            "labeling covers {} samples but the data has {}",
            labeling.sample_count(),
            data.rows()
        )));
    }
    let indices = pk_sample(
        labeling,
        config.batch_identities,
        config.images_per_identity,
        &mut state.sampler_rng,
    )?;
    let labels = indices.iter().map(|&i| labeling.assignments[i]).collect();
    let x = data.select_rows(&indices)?;
    let views = (0..state.pairs.len())
        .map(|_| augment(&x, config.aug_noise_sigma, config.aug_drop_prob, &mut state.augment_rng))
        .collect();
    Ok(IterationBatch { indices, labels, views })
}

fn non_finite_dump(batch: &IterationBatch, report: &LossReport, state: &TrainState) -> String {
    let mut s = format!(
        "l_ce={} l_mce={} l_gcc={} l_total={}; batch indices {:?}",
        report.l_ce, report.l_mce, report.l_gcc, report.l_total, batch.indices
    );
    for (j, p) in state.pairs.iter().enumerate() {
        let _ = write!(
            s,
            "; pair {j}: student finite={} teacher finite={}",
            p.student.is_finite(),
            p.teacher.is_finite()
        );
    }
    for (j, v) in batch.views.iter().enumerate() {
        let rows: Vec<String> = v
            .row_iter()
            .map(|r| r.iter().map(|x| sig9(*x)).collect::<Vec<_>>().join(" "))
            .collect();
        let _ = write!(s, "; view {j}: [{}]", rows.join(" | "));
    }
    s
}

/// One optimization step of every student followed by the EMA update of
/// every teacher.
pub fn train_iteration(state: &mut TrainState, config: &TrainConfig, data: &Matrix) -> Result<LossReport> {
    let batch = draw_batch(state, config, data)?;
    let targets = TeacherTargets::compute(&state.teachers(), &batch.views, config.knn_k)?;
    let out = student_objective(
        &state.students(),
        &batch.views,
        &batch.labels,
        &targets,
        config.knn_k,
        config.beta,
        ObjectiveWeights::combined(config.lambda_gcc),
    )?;
    if !out.report.is_finite() || out.gradients.iter().any(|g| !g.global_norm().is_finite()) {
        return Err(Error::NonFiniteLoss {
            epoch: state.epoch,
            iteration: state.iteration,
            detail: non_finite_dump(&batch, &out.report, state),
        });
    }
    for ((pair, opt), grads) in state.pairs.iter_mut().zip(&mut state.optimizers).zip(&out.gradients) {
        opt.apply(pair.student.params_mut(), grads)?;
    }
    for pair in &mut state.pairs {
        pair.ema_update()?;
    }
    state.iteration += 1;
    Ok(out.report)
}

fn evaluate_teachers(state: &TrainState, eval: Option<&SyntheticDataset>) -> Result<Vec<EvalResult>> {
    match eval {
        Some(ds) => state.pairs.iter().map(|p| evaluate_network(&p.teacher, ds)).collect(),
        None => Ok(Vec::new()),
    }
}

/// Result of a full adaptation run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub pairs: Vec<NetworkPair>,
    pub log: MetricLog,
}

/// Runs every epoch: relabel, `iters_per_epoch` iterations, evaluate the
/// teachers. Adaptation uses the train split of `target`; query and gallery
/// splits, when present, are only used for the logged metrics.
pub fn train(config: &TrainConfig, pretrained: &[Network], target: &SyntheticDataset) -> Result<TrainOutcome> {
    train_with_observer(config, pretrained, target, |_, _| {})
}

/// [`train`] with a callback after every epoch, e.g. for progress output.
pub fn train_with_observer(
    config: &TrainConfig,
    pretrained: &[Network],
    target: &SyntheticDataset,
    mut observer: impl FnMut(&TrainState, &EpochRecord),
) -> Result<TrainOutcome> {
    let mut state = TrainState::new(config, pretrained)?;
    let data = target.split(Split::Train).features;
    if data.rows() < 2 {
        return Err(Error::Size(format!("target train split has {} samples", data.rows())));
    }
    let eval = target.has_eval_splits().then_some(target);
    let teachers = evaluate_teachers(&state, eval)?;
    let record = EpochRecord {
        epoch: 0,
        losses: LossReport {
            lambda_gcc: config.lambda_gcc,
            ..LossReport::default()
        },
        best_teacher: best_teacher(&teachers),
        teachers,
    };
    observer(&state, &record);
    state.log.records.push(record);
    for epoch in 0..config.epochs {
        state.epoch = epoch;
        state.set_learning_rate(config.learning_rate_at(epoch));
        state.relabel(config, &data)?;
        let mut sum = LossReport::default();
        for _ in 0..config.iters_per_epoch {
            let r = train_iteration(&mut state, config, &data)?;
            sum.l_ce += r.l_ce;
            sum.l_mce += r.l_mce;
            sum.l_gcc += r.l_gcc;
            sum.l_total += r.l_total;
        }
        let n = config.iters_per_epoch.max(1) as f64;
        let teachers = evaluate_teachers(&state, eval)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            losses: LossReport {
                l_ce: sum.l_ce / n,
                l_mce: sum.l_mce / n,
                l_gcc: sum.l_gcc / n,
                l_total: sum.l_total / n,
                lambda_gcc: config.lambda_gcc,
            },
            best_teacher: best_teacher(&teachers),
            teachers,
        };
        observer(&state, &record);
        state.log.records.push(record);
    }
    Ok(TrainOutcome {
        pairs: state.pairs,
        log: state.log,
    })
}
