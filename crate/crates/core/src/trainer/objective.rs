//! Loss and gradients of one batch for all students at once.

use crate::error::{Error, Result};
use crate::graphs::{build_student_graph, fused_teacher_graph, student_graph_backward, SparseRowGraph};
use crate::losses::{ce_loss, gcc_loss, mce_loss, total_loss, LossReport};
use crate::model::Network;
use crate::numcore::{GradBundle, Matrix, ParamId};

/// Teacher outputs on each pair's view. Constants for the student update.
#[derive(Debug, Clone)]
pub struct TeacherTargets {
    pub features: Vec<Matrix>,
    pub probabilities: Vec<Matrix>,
    pub fused: SparseRowGraph,
}

impl TeacherTargets {
    pub fn compute(teachers: &[&Network], views: &[Matrix], knn_k: usize) -> Result<Self> {
        if teachers.len() != views.len() || teachers.is_empty() {
            return Err(Error::Parameter(format!(
                "{} teachers for {} views",
                teachers.len(),
                views.len()
            )));
        }
        let mut features = Vec::with_capacity(views.len());
        let mut probabilities = Vec::with_capacity(views.len());
        for (t, v) in teachers.iter().zip(views) {
            let out = t.forward(v)?;
            features.push(out.features);
            probabilities.push(out.probabilities);
        }
        let refs: Vec<&Matrix> = features.iter().collect();
        let fused = fused_teacher_graph(&refs, knn_k)?;
        Ok(Self {
            features,
            probabilities,
            fused,
        })
    }
}

/// Coefficients of the three loss terms in the differentiated objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights {
    pub ce: f64,
    pub mce: f64,
    pub gcc: f64,
}

impl ObjectiveWeights {
    /// `L_CE + L_MCE + λ·L_GCC`.
    pub fn combined(lambda_gcc: f64) -> Self {
        Self {
            ce: 1.0,
            mce: 1.0,
            gcc: lambda_gcc,
        }
    }

    pub fn only_ce() -> Self {
        Self { ce: 1.0, mce: 0.0, gcc: 0.0 }
    }

    pub fn only_mce() -> Self {
        Self { ce: 0.0, mce: 1.0, gcc: 0.0 }
    }

    pub fn only_gcc() -> Self {
        Self { ce: 0.0, mce: 0.0, gcc: 1.0 }
    }

    pub fn value(&self, report: &LossReport) -> f64 {
        self.ce * report.l_ce + self.mce * report.l_mce + self.gcc * report.l_gcc
    }
}

#[derive(Debug, Clone)]
pub struct ObjectiveOutput {
    /// All three components, combined with `weights.gcc` as λ.
    pub report: LossReport,
    /// Per student; `value` is the weighted objective.
    pub gradients: Vec<GradBundle>,
}

/// Forward and backward pass of every student on its own view.
pub fn student_objective(
    students: &[&Network],
    views: &[Matrix],
    labels: &[usize],
    targets: &TeacherTargets,
    knn_k: usize,
    beta: f64,
    weights: ObjectiveWeights,
) -> Result<ObjectiveOutput> {
    if students.len() != views.len() || students.len() != targets.features.len() {
        return Err(Error::Parameter(format!(
            "{} students, {} views, {} teacher targets",
            students.len(),
            views.len(),
            targets.features.len()
        )));
    }
    let outputs = students
        .iter()
        .zip(views)
        .map(|(s, v)| s.forward(v))
        .collect::<Result<Vec<_>>>()?;
    let mut l_ce = 0.0;
    let mut ce_grads = Vec::with_capacity(students.len());
    for out in &outputs {
        let (v, g) = ce_loss(&out.probabilities, labels)?;
        l_ce += v;
        ce_grads.push(g);
    }
    let probs: Vec<Matrix> = outputs.iter().map(|o| o.probabilities.clone()).collect();
    let (l_mce, mce_grads) = mce_loss(&probs, &targets.probabilities)?;
    let graphs = outputs
        .iter()
        .map(|o| build_student_graph(&o.features, beta))
        .collect::<Result<Vec<_>>>()?;
    let (l_gcc, gcc_grads) = gcc_loss(&graphs, &targets.fused, knn_k)?;
    let report = total_loss(l_ce, l_mce, l_gcc, weights.gcc);
    let value = weights.value(&report);

    let mut gradients = Vec::with_capacity(students.len());
    for (j, (student, out)) in students.iter().zip(&outputs).enumerate() {
        let grad_logits = ce_grads[j].scale(weights.ce).add(&mce_grads[j].scale(weights.mce))?;
        let (g_head, mut g_feat) = student.head.backward(&out.features, &grad_logits)?;
        if weights.gcc != 0.0 {
            let g_graph = student_graph_backward(&out.features, &gcc_grads[j], beta)?;
            g_feat.axpy(weights.gcc, &g_graph)?;
        }
        let layers = student.encoder.backward(&out.cache, &g_feat)?;
        let mut bundle = GradBundle::new(value);
        for (i, l) in layers.into_iter().enumerate() {
            bundle.gradients.insert(ParamId::EncoderWeight(i), l.weight);
            bundle.gradients.insert(ParamId::EncoderBias(i), l.bias);
        }
        bundle.gradients.insert(ParamId::HeadWeight, g_head);
        gradients.push(bundle);
    }
    Ok(ObjectiveOutput { report, gradients })
}
