use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::numcore::Matrix;
use crate::rng::Rng;

/// Adds `N(0, sigma²)` noise to every entry, then zeroes each entry with
/// probability `drop_prob`. Entries are visited in row-major order; no
/// random numbers are drawn for a disabled component.
pub fn augment(batch: &Matrix, sigma: f64, drop_prob: f64, rng: &mut Rng) -> Matrix {
    debug_assert!(sigma >= 0.0 && (0.0..1.0).contains(&drop_prob));
    let mut out = batch.clone();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("finite non-negative sigma");
        for v in out.data_mut() {
            *v += normal.sample(rng);
        }
    }
    if drop_prob > 0.0 {
        for v in out.data_mut() {
            if rng.random::<f64>() < drop_prob {
                *v = 0.0;
            }
        }
    }
    out
}
