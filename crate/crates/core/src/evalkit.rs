//! Retrieval evaluation: mean average precision and CMC curves under the
//! cross-camera protocol (gallery items sharing both identity and camera
//! with the query are dropped before ranking).

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// Features with identity and camera labels.
#[derive(Debug, Clone, Copy)]
pub struct RetrievalSet<'a> {
    pub features: &'a Matrix,
    pub identities: &'a [usize],
    pub cameras: &'a [usize],
}

impl<'a> RetrievalSet<'a> {
    pub fn new(features: &'a Matrix, identities: &'a [usize], cameras: &'a [usize]) -> Result<Self> {
        if identities.len() != features.rows() || cameras.len() != features.rows() {
            return Err(Error::Dimension {
                op: "retrieval set labels",
                left: (features.rows(), features.cols()),
                right: (identities.len(), cameras.len()),
            });
        }
        Ok(Self {
            features,
            identities,
            cameras,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub map: f64,
    /// `cmc[r]` is the fraction of valid queries whose first match is at rank `r + 1`
    /// or better; its length equals the gallery size.
    pub cmc: Vec<f64>,
    pub query_count: usize,
    /// Queries with no valid match after filtering.
    pub excluded: usize,
}

impl EvalResult {
    /// CMC at 1-based rank `k`, saturating at the gallery size.
    pub fn rank(&self, k: usize) -> f64 {
        match self.cmc.len() {
            0 => 0.0,
            n => self.cmc[k.clamp(1, n) - 1],
        }
    }

    pub fn rank1(&self) -> f64 {
        self.rank(1)
    }

    pub fn rank5(&self) -> f64 {
        self.rank(5)
    }

    pub fn rank10(&self) -> f64 {
        self.rank(10)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "map = {:.6}", self.map);
        let _ = writeln!(out, "queries = {}", self.query_count);
        let _ = writeln!(out, "excluded = {}", self.excluded);
        let cmc: Vec<String> = (1..=10).map(|k| format!("{:.6}", self.rank(k))).collect();
        let _ = writeln!(out, "cmc = {}", cmc.join(","));
        out
    }
}

fn check_sets(query: &RetrievalSet, gallery: &RetrievalSet) -> Result<()> {
    if query.features.cols() != gallery.features.cols() {
        return Err(Error::Dimension {
            op: "evaluate",
            left: query.features.shape(),
            right: gallery.features.shape(),
        });
    }
    if gallery.is_empty() {
        return Err(Error::Evaluation("empty gallery".into()));
    }
    Ok(())
}

fn finish(ap_sum: f64, cmc_counts: Vec<usize>, valid: usize, excluded: usize) -> Result<EvalResult> {
    if valid == 0 {
        return Err(Error::Evaluation(format!(
            "no query has a valid gallery match ({excluded} excluded)"
        )));
    }
    Ok(EvalResult {
        map: ap_sum / valid as f64,
        cmc: cmc_counts.iter().map(|&c| c as f64 / valid as f64).collect(),
        query_count: valid,
        excluded,
    })
}

pub fn evaluate(query: &RetrievalSet, gallery: &RetrievalSet) -> Result<EvalResult> {
    check_sets(query, gallery)?;
    let sims = query.features.matmul_t(gallery.features)?;
    let n = gallery.len();
    let mut first_hit = vec![0usize; n];
    let (mut ap_sum, mut valid, mut excluded) = (0.0, 0usize, 0usize);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for q in 0..query.len() {
        let (qid, qcam) = (query.identities[q], query.cameras[q]);
        let row = sims.row(q);
        order.clear();
        order.extend((0..n).filter(|&g| !(gallery.identities[g] == qid && gallery.cameras[g] == qcam)));
        order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        let total = order.iter().filter(|&&g| gallery.identities[g] == qid).count();
        if total == 0 {
            excluded += 1;
            continue;
        }
        let mut hits = 0usize;
        let mut ap = 0.0;
        let mut first = None;
        for (r, &g) in order.iter().enumerate() {
            if gallery.identities[g] == qid {
                hits += 1;
                ap += hits as f64 / (r + 1) as f64;
                first.get_or_insert(r);
            }
        }
        ap_sum += ap / total as f64;
        first_hit[first.expect("at least one match")] += 1;
        valid += 1;
    }
    let mut cumulative = 0;
    let cmc_counts = first_hit
        .into_iter()
        .map(|c| {
            cumulative += c;
            cumulative
        })
        .collect();
    finish(ap_sum, cmc_counts, valid, excluded)
}

/// Reference implementation that computes every rank by counting, used to
/// cross-check [`evaluate`].
pub fn brute_force_oracle(query: &RetrievalSet, gallery: &RetrievalSet) -> Result<EvalResult> {
    check_sets(query, gallery)?;
    let n = gallery.len();
    let mut cmc_counts = vec![0usize; n];
    let (mut ap_sum, mut valid, mut excluded) = (0.0, 0usize, 0usize);
    for q in 0..query.len() {
        let qf = query.features.row(q);
        let (qid, qcam) = (query.identities[q], query.cameras[q]);
        let kept: Vec<usize> = (0..n)
            .filter(|&g| gallery.identities[g] != qid || gallery.cameras[g] != qcam)
            .collect();
        let sim = |g: usize| -> f64 {
            let gf = gallery.features.row(g);
            let mut s = 0.0;
            for d in 0..gf.len() {
                s += qf[d] * gf[d];
            }
            s
        };
        let sims: Vec<f64> = kept.iter().map(|&g| sim(g)).collect();
        let position = |i: usize| -> usize {
            1 + (0..kept.len())
                .filter(|&j| sims[j] > sims[i] || (sims[j] == sims[i] && kept[j] < kept[i]))
                .count()
        };
        let mut relevant: Vec<usize> = (0..kept.len())
            .filter(|&i| gallery.identities[kept[i]] == qid)
            .map(position)
            .collect();
        if relevant.is_empty() {
            excluded += 1;
            continue;
        }
        relevant.sort_unstable();
        let mut ap = 0.0;
        for &p in &relevant {
            let better = relevant.iter().filter(|&&o| o <= p).count();
            ap += better as f64 / p as f64;
        }
        ap_sum += ap / relevant.len() as f64;
        for slot in cmc_counts.iter_mut().skip(relevant[0] - 1) {
            *slot += 1;
        }
        valid += 1;
    }
    finish(ap_sum, cmc_counts, valid, excluded)
}
