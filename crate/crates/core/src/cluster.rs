//! Epoch-level pseudo labels: k-means over teacher features averaged across
//! networks, then classifier heads re-initialized from the cluster means.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::model::NetworkPair;
use crate::numcore::{l2_normalize_rows, row_norm, squared_distance, Matrix};
use crate::rng::{rng_for, streams, Rng};

/// Cluster assignments for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabeling {
    pub assignments: Vec<usize>,
    /// `C × d`, unit rows.
    pub cluster_means: Matrix,
    /// Sum of squared distances to the assigned k-means centroids.
    pub inertia: f64,
    pub epoch: usize,
}

impl PseudoLabeling {
    pub fn cluster_count(&self) -> usize {
        self.cluster_means.rows()
    }

    pub fn sample_count(&self) -> usize {
        self.assignments.len()
    }

    /// Sample indices grouped by cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cluster_count()];
        for (i, &c) in self.assignments.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

/// Full record of a k-means run.
#[derive(Debug, Clone)]
pub struct KMeansRun {
    pub assignments: Vec<usize>,
    /// Final (unnormalized) Lloyd centroids.
    pub centroids: Matrix,
    /// Inertia after every assignment step, starting with the seeding.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Mean of per-teacher feature matrices, re-normalized row-wise.
pub fn average_teacher_features(per_teacher: &[Matrix]) -> Result<Matrix> {
    let first = per_teacher
        .first()
        .ok_or_else(|| Error::Parameter("need features from at least one teacher".into()))?;
    if per_teacher.len() == 1 {
        return Ok(first.clone());
    }
    let mut acc = first.clone();
    for m in &per_teacher[1..] {
        if m.shape() != first.shape() {
            return Err(Error::Dimension {
                op: "average_teacher_features",
                left: first.shape(),
                right: m.shape(),
            });
        }
        acc.add_assign(m)?;
    }
    Ok(l2_normalize_rows(&acc.scale(1.0 / per_teacher.len() as f64)))
}

fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centroids.row_iter().enumerate() {
        let d = squared_distance(point, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn sample_weighted(weights: &[f64], total: f64, rng: &mut Rng) -> usize {
    let mut u = rng.random_range(0.0..total);
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // rounding fell off the end: last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Greedy k-means++ seeding: each new centre is the best of several
/// D²-sampled candidates by resulting potential.
fn seed_centroids(features: &Matrix, c: usize, rng: &mut Rng) -> Matrix {
    let n = features.rows();
    let trials = 2 + (c as f64).ln().floor() as usize;
    let mut chosen = Vec::with_capacity(c);
    chosen.push(rng.random_range(0..n));
    let mut closest: Vec<f64> = (0..n)
        .map(|i| squared_distance(features.row(i), features.row(chosen[0])))
        .collect();
    while chosen.len() < c {
        let total: f64 = closest.iter().sum();
        let next = if total <= 0.0 {
            // every point coincides with a centre; take an unused index
            let unused: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            unused[rng.random_range(0..unused.len())]
        } else {
            let mut best: Option<(usize, f64)> = None;
            for _ in 0..trials {
                let cand = sample_weighted(&closest, total, rng);
                let potential: f64 = (0..n)
                    .map(|i| closest[i].min(squared_distance(features.row(i), features.row(cand))))
                    .sum();
                if best.is_none_or(|(_, p)| potential < p) {
                    best = Some((cand, potential));
                }
            }
            best.expect("at least one trial").0
        };
        chosen.push(next);
        for (i, d) in closest.iter_mut().enumerate() {
            *d = d.min(squared_distance(features.row(i), features.row(next)));
        }
    }
    features.select_rows(&chosen).expect("indices in range")
}

/// Assigns every point to its nearest centroid, then gives each empty
/// cluster the point farthest from its own centroid (taken from a cluster
/// with at least two members), moving that centroid onto the point.
fn assign_and_repair(features: &Matrix, centroids: &mut Matrix, assignments: &mut [usize], dists: &mut [f64]) {
    let c = centroids.rows();
    let mut counts = vec![0usize; c];
    for (i, p) in features.row_iter().enumerate() {
        let (k, d) = nearest(p, centroids);
        assignments[i] = k;
        dists[i] = d;
        counts[k] += 1;
    }
    for empty in 0..c {
        if counts[empty] > 0 {
            continue;
        }
        let donor = (0..features.rows())
            .filter(|&i| counts[assignments[i]] > 1)
            .fold(None::<usize>, |best, i| match best {
                Some(b) if dists[b] >= dists[i] => Some(b),
                _ => Some(i),
            });
        let Some(i) = donor else { break };
        counts[assignments[i]] -= 1;
        counts[empty] = 1;
        assignments[i] = empty;
        dists[i] = 0.0;
        centroids.row_mut(empty).copy_from_slice(features.row(i));
    }
}

fn cluster_means(features: &Matrix, assignments: &[usize], c: usize) -> Matrix {
    let mut sums = Matrix::zeros(c, features.cols());
    let mut counts = vec![0usize; c];
    for (i, &k) in assignments.iter().enumerate() {
        counts[k] += 1;
        for (s, &v) in sums.row_mut(k).iter_mut().zip(features.row(i)) {
            *s += v;
        }
    }
    for (k, &n) in counts.iter().enumerate() {
        if n > 0 {
            for s in sums.row_mut(k) {
                *s /= n as f64;
            }
        }
    }
    sums
}

/// Lloyd iterations from greedy k-means++ seeds until the assignment stops
/// changing or `max_iters` updates have run.
pub fn kmeans_run(features: &Matrix, c: usize, max_iters: usize, seed: u64) -> Result<KMeansRun> {
    let n = features.rows();
    if c == 0 {
        return Err(Error::Parameter("cluster count must be at least 1".into()));
    }
    if n < c {
        return Err(Error::Size(format!("cannot form {c} clusters from {n} points")));
    }
    features.ensure_finite("k-means input")?;
    let mut rng = rng_for(seed, streams::KMEANS);
    let mut centroids = seed_centroids(features, c, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut dists = vec![0.0; n];
    assign_and_repair(features, &mut centroids, &mut assignments, &mut dists);
    let mut history = vec![dists.iter().sum::<f64>()];
    let mut iterations = 0;
    let mut converged = false;
    let mut next = assignments.clone();
    while iterations < max_iters {
        iterations += 1;
        centroids = cluster_means(features, &assignments, c);
        assign_and_repair(features, &mut centroids, &mut next, &mut dists);
        history.push(dists.iter().sum::<f64>());
        if next == assignments {
            converged = true;
            break;
        }
        std::mem::swap(&mut assignments, &mut next);
    }
    Ok(KMeansRun {
        assignments,
        centroids,
        inertia_history: history,
        iterations,
        converged,
    })
}

/// k-means producing pseudo labels and unit-norm cluster means.
pub fn kmeans(features: &Matrix, c: usize, max_iters: usize, seed: u64) -> Result<PseudoLabeling> {
    let run = kmeans_run(features, c, max_iters, seed)?;
    let mut means = cluster_means(features, &run.assignments, c);
    for k in 0..c {
        if row_norm(means.row(k)) < 1e-12 {
            // antipodal members cancel out; fall back to the first member
            let first = run.assignments.iter().position(|&a| a == k).expect("clusters are non-empty");
            means.row_mut(k).copy_from_slice(features.row(first));
        }
    }
    Ok(PseudoLabeling {
        assignments: run.assignments,
        cluster_means: l2_normalize_rows(&means),
        inertia: *run.inertia_history.last().expect("history is non-empty"),
        epoch: 0,
    })
}

/// Fraction of samples whose cluster's majority label equals their own.
pub fn purity(assignments: &[usize], labels: &[usize]) -> f64 {
    if assignments.is_empty() {
        return 1.0;
    }
    let mut by_cluster: std::collections::BTreeMap<usize, std::collections::BTreeMap<usize, usize>> =
        Default::default();
    for (&a, &l) in assignments.iter().zip(labels) {
        *by_cluster.entry(a).or_default().entry(l).or_default() += 1;
    }
    let majority: usize = by_cluster.values().map(|m| m.values().copied().max().unwrap_or(0)).sum();
    majority as f64 / assignments.len() as f64
}

/// Extracts teacher features for the whole dataset, clusters their average,
/// and re-initializes every pair's heads from the cluster means.
pub fn relabel_epoch(
    pairs: &mut [NetworkPair],
    data: &Matrix,
    c: usize,
    max_iters: usize,
    seed: u64,
    epoch: usize,
) -> Result<PseudoLabeling> {
    if data.rows() == 0 {
        return Err(Error::Size("cannot relabel an empty dataset".into()));
    }
    if pairs.is_empty() {
        return Err(Error::Parameter("need at least one network pair".into()));
    }
    let feats = pairs
        .iter()
        .map(|p| p.teacher.features(data))
        .collect::<Result<Vec<_>>>()?;
    let averaged = average_teacher_features(&feats)?;
    let mut labeling = kmeans(&averaged, c, max_iters, crate::rng::derive_seed(seed, epoch as u64))?;
    labeling.epoch = epoch;
    for p in pairs.iter_mut() {
        p.reinit_head(&labeling.cluster_means)?;
    }
    Ok(labeling)
}
