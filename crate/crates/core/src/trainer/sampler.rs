use rand::seq::index::sample;
use rand::Rng as _;

use crate::cluster::PseudoLabeling;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Identity-balanced batch: `P` clusters, `K_img` members each, grouped by
/// cluster. Clusters are drawn without replacement unless fewer than `P`
/// are non-empty; members likewise unless the cluster is smaller than `K_img`.
pub fn pk_sample(labeling: &PseudoLabeling, p: usize, k_img: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if p == 0 || k_img == 0 {
        return Err(Error::Parameter("P and K_img must be at least 1".into()));
    }
    let members: Vec<Vec<usize>> = labeling.members().into_iter().filter(|m| !m.is_empty()).collect();
    if members.is_empty() {
        return Err(Error::State("pseudo labeling has no non-empty cluster".into()));
    }
    let chosen: Vec<usize> = if members.len() >= p {
        sample(rng, members.len(), p).into_vec()
    } else {
        (0..p).map(|_| rng.random_range(0..members.len())).collect()
    };
    let mut batch = Vec::with_capacity(p * k_img);
    for c in chosen {
        let m = &members[c];
        if m.len() >= k_img {
            batch.extend(sample(rng, m.len(), k_img).into_iter().map(|i| m[i]));
        } else {
            batch.extend((0..k_img).map(|_| m[rng.random_range(0..m.len())]));
        }
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Matrix;
    use crate::rng::rng_for;
    use std::collections::BTreeSet;

    fn labeling(assignments: Vec<usize>, c: usize) -> PseudoLabeling {
        PseudoLabeling {
            cluster_means: Matrix::zeros(c, 2),
            assignments,
            inertia: 0.0,
            epoch: 0,
        }
    }

    #[test]
    fn full_scale_batch_shape() {
        let l = labeling((0..400).map(|i| i % 100).collect(), 100);
        let mut rng = rng_for(1, 3);
        let b = pk_sample(&l, 16, 4, &mut rng).unwrap();
        assert_eq!(b.len(), 64);
        let clusters: BTreeSet<usize> = b.iter().map(|&i| l.assignments[i]).collect();
        assert_eq!(clusters.len(), 16);
        for chunk in b.chunks(4) {
            let set: BTreeSet<usize> = chunk.iter().copied().collect();
            assert_eq!(set.len(), 4, "distinct members without replacement");
            assert!(chunk.iter().all(|&i| l.assignments[i] == l.assignments[chunk[0]]));
        }
    }

    #[test]
    fn singleton_cluster_repeats() {
        let l = labeling(vec![0], 1);
        let b = pk_sample(&l, 1, 4, &mut rng_for(0, 3)).unwrap();
        assert_eq!(b, vec![0, 0, 0, 0]);
    }

    #[test]
    fn saturation_covers_every_cluster_once() {
        let l = labeling((0..30).map(|i| i % 5).collect(), 5);
        let b = pk_sample(&l, 5, 2, &mut rng_for(2, 3)).unwrap();
        let mut seen: Vec<usize> = b.chunks(2).map(|c| l.assignments[c[0]]).collect();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn fewer_clusters_than_p() {
        let l = labeling(vec![0, 0, 1, 1, 1], 4);
        let b = pk_sample(&l, 6, 2, &mut rng_for(3, 3)).unwrap();
        assert_eq!(b.len(), 12);
    }

    #[test]
    fn empty_labeling() {
        let l = labeling(vec![], 3);
        assert!(matches!(pk_sample(&l, 2, 2, &mut rng_for(0, 3)), Err(Error::State(_))));
    }
}
