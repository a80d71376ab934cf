//! Batch similarity graphs.
//!
//! Each teacher network yields a directed K-nearest-neighbour graph over the
//! batch, weighted by cosine similarity. Teacher graphs are softmax-normalized
//! over each row's own neighbours and averaged into one fused target graph.
//! Student networks instead produce a dense row-stochastic graph: a softmax
//! over all other batch members at temperature `beta`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numcore::{softmax_in_place, Matrix};
use crate::numfmt::sig9;

/// Per-row sparse edge list. Rows are sorted by neighbour index and never
/// contain a self edge.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRowGraph {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRowGraph {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            for w in row.windows(2) {
                if w[0].0 >= w[1].0 {
                    return Err(Error::Validation(format!("row {i} is not strictly sorted by neighbour")));
                }
            }
            for &(k, _) in row {
                if k == i {
                    return Err(Error::Validation(format!("row {i} has a self edge")));
                }
                if k >= n {
                    return Err(Error::Index {
                        op: "SparseRowGraph::from_rows",
                        index: k,
                        bound: n,
                    });
                }
            }
        }
        Ok(Self { rows })
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[(usize, f64)]> {
        self.rows.iter().map(Vec::as_slice)
    }

    /// Weight of edge `i → k`, zero when absent.
    pub fn weight(&self, i: usize, k: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&k, |&(n, _)| n)
            .map_or(0.0, |pos| self.rows[i][pos].1)
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, w)| w).sum()
    }

    /// Text dump: one `i k weight` line per edge, sorted by `(i, k)`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, row) in self.rows.iter().enumerate() {
            for &(k, w) in row {
                let _ = writeln!(out, "{i} {k} {}", sig9(w));
            }
        }
        out
    }
}

/// Dense `B × B` row-stochastic matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseRowStochastic {
    weights: Matrix,
}

impl DenseRowStochastic {
    pub fn size(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.weights.get(i, k)
    }

    /// Wraps an arbitrary matrix, checking the row-stochastic contract.
    pub fn from_matrix(weights: Matrix) -> Result<Self> {
        if weights.rows() != weights.cols() {
            return Err(Error::Dimension {
                op: "DenseRowStochastic::from_matrix",
                left: weights.shape(),
                right: (weights.rows(), weights.rows()),
            });
        }
        for i in 0..weights.rows() {
            if weights.get(i, i) != 0.0 {
                return Err(Error::Validation(format!("diagonal entry {i} is non-zero")));
            }
            let s: f64 = weights.row(i).iter().sum();
            if (s - 1.0).abs() > 1e-9 || weights.row(i).iter().any(|&v| v < 0.0) {
                return Err(Error::Validation(format!("row {i} is not a distribution (sum {s})")));
            }
        }
        Ok(Self { weights })
    }
}

fn check_batch(features: &Matrix) -> Result<()> {
    if features.rows() < 2 {
        return Err(Error::Size(format!(
            "graph needs at least 2 nodes, batch has {}",
            features.rows()
        )));
    }
    Ok(())
}

/// Directed K-NN graph over unit feature rows weighted by dot product.
/// `k` is clamped to `B − 1`; ties go to the smaller index.
pub fn build_teacher_graph(features: &Matrix, k: usize) -> Result<SparseRowGraph> {
    check_batch(features)?;
    if k == 0 {
        return Err(Error::Parameter("K must be at least 1".into()));
    }
    let n = features.rows();
    let k = k.min(n - 1);
    let sims = features.matmul_t(features)?;
    let mut rows = Vec::with_capacity(n);
    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        let s = sims.row(i);
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
        let mut row: Vec<(usize, f64)> = order[..k].iter().map(|&j| (j, s[j])).collect();
        row.sort_by_key(|&(j, _)| j);
        rows.push(row);
    }
    Ok(SparseRowGraph { rows })
}

/// Replaces each row's weights by a softmax over that row's own edges.
pub fn normalize_teacher_graph(graph: &SparseRowGraph) -> Result<SparseRowGraph> {
    let mut rows = graph.rows.clone();
    for (i, row) in rows.iter_mut().enumerate() {
        if row.is_empty() {
            return Err(Error::Internal(format!("teacher graph row {i} has no edges")));
        }
        let mut w: Vec<f64> = row.iter().map(|&(_, v)| v).collect();
        softmax_in_place(&mut w, 1.0);
        for (e, v) in row.iter_mut().zip(w) {
            e.1 = v;
        }
    }
    Ok(SparseRowGraph { rows })
}

/// Averages normalized teacher graphs; missing edges count as zero.
pub fn fuse_teacher_graphs(graphs: &[SparseRowGraph]) -> Result<SparseRowGraph> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::Parameter("fusion needs at least one graph".into()))?;
    let n = first.size();
    for g in graphs {
        if g.size() != n {
            return Err(Error::Dimension {
                op: "fuse_teacher_graphs",
                left: (n, n),
                right: (g.size(), g.size()),
            });
        }
    }
    let m = graphs.len() as f64;
    let rows = (0..n)
        .map(|i| {
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            for g in graphs {
                for &(k, w) in &g.rows[i] {
                    *acc.entry(k).or_insert(0.0) += w;
                }
            }
            acc.into_iter().map(|(k, w)| (k, w / m)).collect()
        })
        .collect();
    Ok(SparseRowGraph { rows })
}

/// Convenience: build, normalize and fuse the graphs of several teachers.
pub fn fused_teacher_graph(teacher_features: &[&Matrix], k: usize) -> Result<SparseRowGraph> {
    let normalized = teacher_features
        .iter()
        .map(|f| normalize_teacher_graph(&build_teacher_graph(f, k)?))
        .collect::<Result<Vec<_>>>()?;
    fuse_teacher_graphs(&normalized)
}

/// `w_ik = softmax_{k≠i}(f_i·f_k / beta)` with a zero diagonal.
pub fn build_student_graph(features: &Matrix, beta: f64) -> Result<DenseRowStochastic> {
    check_batch(features)?;
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Parameter(format!("beta must be positive, got {beta}")));
    }
    let n = features.rows();
    let mut w = features.matmul_t(features)?;
    for i in 0..n {
        let row = w.row_mut(i);
        let max = row
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .map(|(_, &v)| v / beta)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (k, v) in row.iter_mut().enumerate() {
            if k == i {
                *v = 0.0;
            } else {
                *v = (*v / beta - max).exp();
                sum += *v;
            }
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(DenseRowStochastic { weights: w })
}

/// Chains a gradient w.r.t. the student-graph logits `s_ik = f_i·f_k/β`
/// (diagonal ignored) back to the features: `∂/∂F = (G + Gᵀ)·F / β`.
pub fn student_graph_backward(features: &Matrix, grad_logits: &Matrix, beta: f64) -> Result<Matrix> {
    let n = features.rows();
    if grad_logits.shape() != (n, n) {
        return Err(Error::Dimension {
            op: "student_graph_backward",
            left: (n, n),
            right: grad_logits.shape(),
        });
    }
    let sym = Matrix::from_fn(n, n, |i, k| {
        if i == k {
            0.0
        } else {
            (grad_logits.get(i, k) + grad_logits.get(k, i)) / beta
        }
    });
    sym.matmul(features)
}
