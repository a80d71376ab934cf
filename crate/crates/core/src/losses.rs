//! Pseudo-label cross entropy, mutual cross entropy against averaged teacher
//! predictions, and the graph consistency loss between student graphs and
//! the fused teacher graph.
//!
//! Every log is taken of `max(p, 1e-12)`. Gradients returned here are exact
//! derivatives of the clamped losses w.r.t. the pre-softmax logits of the
//! student quantity: a clamped entry contributes a constant and therefore no
//! gradient. Teacher-side inputs are constants.

use crate::error::{Error, Result};
use crate::graphs::{DenseRowStochastic, SparseRowGraph};
use crate::numcore::Matrix;

pub const LOG_CLAMP: f64 = 1e-12;

#[inline]
fn clamped_ln(p: f64) -> f64 {
    p.max(LOG_CLAMP).ln()
}

/// Loss components of one batch, summed over student networks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub l_ce: f64,
    pub l_mce: f64,
    pub l_gcc: f64,
    pub l_total: f64,
    pub lambda_gcc: f64,
}

impl LossReport {
    pub fn l_lp(&self) -> f64 {
        self.l_ce + self.l_mce
    }

    pub fn is_finite(&self) -> bool {
        [self.l_ce, self.l_mce, self.l_gcc, self.l_total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// `L = L_CE + L_MCE + λ·L_GCC`.
pub fn total_loss(l_ce: f64, l_mce: f64, l_gcc: f64, lambda_gcc: f64) -> LossReport {
    LossReport {
        l_ce,
        l_mce,
        l_gcc,
        l_total: l_ce + l_mce + lambda_gcc * l_gcc,
        lambda_gcc,
    }
}

/// Gradient of `−Σ_c target_c·ln max(p_c, ε)` w.r.t. the logits behind the
/// softmax `p`, scaled by `scale`, written into `out`.
fn clamped_xent_grad(target: &[f64], probs: &[f64], scale: f64, out: &mut [f64]) {
    let live_mass: f64 = target
        .iter()
        .zip(probs)
        .filter(|&(_, &p)| p >= LOG_CLAMP)
        .map(|(t, _)| t)
        .sum();
    for ((o, &t), &p) in out.iter_mut().zip(target).zip(probs) {
        let own = if p >= LOG_CLAMP { t } else { 0.0 };
        *o = scale * (p * live_mass - own);
    }
}

fn check_probs(probs: &Matrix, op: &'static str) -> Result<()> {
    if probs.rows() == 0 {
        return Err(Error::Size(format!("{op}: empty batch")));
    }
    Ok(())
}

/// `−(1/B)·Σ_i ln p_i(y_i)` and its gradient w.r.t. the logits.
pub fn ce_loss(probabilities: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    check_probs(probabilities, "ce_loss")?;
    let (b, c) = probabilities.shape();
    if labels.len() != b {
        return Err(Error::Dimension {
            op: "ce_loss",
            left: probabilities.shape(),
            right: (labels.len(), 1),
        });
    }
    let scale = 1.0 / b as f64;
    let mut value = 0.0;
    let mut grad = Matrix::zeros(b, c);
    let mut onehot = vec![0.0; c];
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::Index {
                op: "ce_loss",
                index: y,
                bound: c,
            });
        }
        let p = probabilities.row(i);
        value -= clamped_ln(p[y]);
        onehot[y] = 1.0;
        clamped_xent_grad(&onehot, p, scale, grad.row_mut(i));
        onehot[y] = 0.0;
    }
    Ok((value * scale, grad))
}

/// Mean of the teacher probability matrices.
pub fn averaged_teacher_probs(teacher_probs: &[Matrix]) -> Result<Matrix> {
    let first = teacher_probs
        .first()
        .ok_or_else(|| Error::Parameter("need at least one teacher".into()))?;
    let mut acc = first.clone();
    for t in &teacher_probs[1..] {
        acc.add_assign(t)?;
    }
    Ok(acc.scale(1.0 / teacher_probs.len() as f64))
}

/// Mutual cross entropy: every student is pulled towards the averaged
/// teacher distribution `P̂`. Returns the loss and one logit gradient per
/// student.
pub fn mce_loss(student_probs: &[Matrix], teacher_probs: &[Matrix]) -> Result<(f64, Vec<Matrix>)> {
    if student_probs.len() != teacher_probs.len() || student_probs.is_empty() {
        return Err(Error::Parameter(format!(
            "mce_loss needs matching non-empty student/teacher lists, got {} and {}",
            student_probs.len(),
            teacher_probs.len()
        )));
    }
    let shape = student_probs[0].shape();
    for m in student_probs.iter().chain(teacher_probs) {
        if m.shape() != shape {
            return Err(Error::Dimension {
                op: "mce_loss",
                left: shape,
                right: m.shape(),
            });
        }
    }
    check_probs(&student_probs[0], "mce_loss")?;
    let target = averaged_teacher_probs(teacher_probs)?;
    let scale = 1.0 / shape.0 as f64;
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(student_probs.len());
    for p in student_probs {
        let mut g = Matrix::zeros(shape.0, shape.1);
        for i in 0..shape.0 {
            let (t, pr) = (target.row(i), p.row(i));
            value -= t.iter().zip(pr).map(|(&t, &p)| t * clamped_ln(p)).sum::<f64>();
            clamped_xent_grad(t, pr, scale, g.row_mut(i));
        }
        grads.push(g);
    }
    Ok((value * scale, grads))
}

fn check_gcc_inputs(graphs: &[DenseRowStochastic], fused: &SparseRowGraph, k: usize) -> Result<f64> {
    if graphs.is_empty() {
        return Err(Error::Parameter("gcc_loss needs at least one student graph".into()));
    }
    if k == 0 {
        return Err(Error::Parameter("K must be at least 1".into()));
    }
    let n = fused.size();
    for g in graphs {
        if g.size() != n {
            return Err(Error::Dimension {
                op: "gcc_loss",
                left: (n, n),
                right: (g.size(), g.size()),
            });
        }
    }
    if n < 2 {
        return Err(Error::Size("gcc_loss needs at least 2 nodes".into()));
    }
    // K is clamped exactly as in graph construction
    let k_eff = k.min(n - 1);
    Ok(1.0 / (n * k_eff) as f64)
}

/// Graph consistency loss
/// `−1/(B·K) · Σ_i Σ_{k≠i} Ŵ_ik · Σ_j ln w^j_ik`
/// and, per student, its gradient w.r.t. the student-graph logits
/// `s_ik = f_i·f_k/β` (zero diagonal). Chain to features with
/// [`crate::graphs::student_graph_backward`].
pub fn gcc_loss(
    student_graphs: &[DenseRowStochastic],
    fused: &SparseRowGraph,
    k: usize,
) -> Result<(f64, Vec<Matrix>)> {
    let scale = check_gcc_inputs(student_graphs, fused, k)?;
    let n = fused.size();
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(student_graphs.len());
    let mut target = vec![0.0; n];
    for g in student_graphs {
        let mut grad = Matrix::zeros(n, n);
        for i in 0..n {
            let w = g.weights().row(i);
            for &(kk, t) in fused.row(i) {
                value -= t * clamped_ln(w[kk]);
                target[kk] = t;
            }
            clamped_xent_grad(&target, w, scale, grad.row_mut(i));
            grad.set(i, i, 0.0);
            for &(kk, _) in fused.row(i) {
                target[kk] = 0.0;
            }
        }
        grads.push(grad);
    }
    Ok((value * scale, grads))
}

/// `∂L_GCC/∂w_ik` for one student graph, treating its entries as free
/// variables, on the support of the fused graph: `−Ŵ_ik / (B·K·w_ik)`
/// (zero where the log clamp is active).
pub fn gcc_edge_gradient(
    student_graph: &DenseRowStochastic,
    fused: &SparseRowGraph,
    k: usize,
) -> Result<SparseRowGraph> {
    let scale = check_gcc_inputs(std::slice::from_ref(student_graph), fused, k)?;
    let rows = (0..fused.size())
        .map(|i| {
            fused
                .row(i)
                .iter()
                .map(|&(kk, t)| {
                    let w = student_graph.get(i, kk);
                    let g = if w >= LOG_CLAMP { -scale * t / w } else { 0.0 };
                    (kk, g)
                })
                .collect()
        })
        .collect();
    SparseRowGraph::from_rows(rows)
}

/// Loss value only, for graphs given as raw matrices (used by the
/// finite-difference checks on individual edge weights).
pub fn gcc_value_from_weights(weights: &[Matrix], fused: &SparseRowGraph, k: usize) -> f64 {
    let n = fused.size();
    let scale = 1.0 / (n * k.min(n - 1)) as f64;
    let mut value = 0.0;
    for w in weights {
        for i in 0..n {
            for &(kk, t) in fused.row(i) {
                value -= t * clamped_ln(w.get(i, kk));
            }
        }
    }
    value * scale
}
