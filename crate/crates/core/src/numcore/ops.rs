use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Denominator floor for L2 normalization.
pub const NORM_FLOOR: f64 = 1e-12;

/// Row-wise softmax of `m / temperature` with max subtraction.
pub fn row_softmax(m: &Matrix, temperature: f64) -> Result<Matrix> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Parameter(format!(
            "softmax temperature must be positive, got {temperature}"
        )));
    }
    let mut out = m.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r), temperature);
    }
    Ok(out)
}

pub(crate) fn softmax_in_place(row: &mut [f64], temperature: f64) {
    if row.is_empty() {
        return;
    }
    let max = row
        .iter()
        .map(|v| v / temperature)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v / temperature - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Divides each row by `max(‖row‖₂, 1e-12)`.
pub fn l2_normalize_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let norm = row_norm(row).max(NORM_FLOOR);
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    out
}

#[inline]
pub fn row_norm(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}
