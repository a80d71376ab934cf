use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Compares `analytic` against central differences of `loss_fn` around
/// `params` and returns `max |analytic − numeric| / max(1, |numeric|)`.
pub fn finite_diff_check<F>(mut loss_fn: F, params: &Matrix, analytic: &Matrix, h: f64) -> Result<f64>
where
    F: FnMut(&Matrix) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::Parameter(format!("step h must be positive, got {h}")));
    }
    if params.shape() != analytic.shape() {
        return Err(Error::Dimension {
            op: "finite_diff_check",
            left: params.shape(),
            right: analytic.shape(),
        });
    }
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for idx in 0..params.data().len() {
        let orig = params.data()[idx];
        probe.data_mut()[idx] = orig + h;
        let plus = loss_fn(&probe);
        probe.data_mut()[idx] = orig - h;
        let minus = loss_fn(&probe);
        probe.data_mut()[idx] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "loss is not finite at coordinate {idx} (+h: {plus}, -h: {minus})"
            )));
        }
        let numeric = (plus - minus) / (2.0 * h);
        let err = (analytic.data()[idx] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_sq(m: &Matrix) -> f64 {
        m.data().iter().map(|v| v * v).sum()
    }

    #[test]
    fn quadratic_is_exact() {
        let p = Matrix::from_rows(&[[0.3, -1.2, 4.0], [2.0, 0.0, -0.7]]).unwrap();
        let err = finite_diff_check(sum_sq, &p, &p.scale(2.0), 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn constant_loss_zero_gradient() {
        let p = Matrix::filled(2, 2, 1.5);
        let err = finite_diff_check(|_| 3.0, &p, &Matrix::zeros(2, 2), 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn injected_fault_is_detected() {
        let p = Matrix::from_rows(&[[0.5, -0.25]]).unwrap();
        let mut analytic = p.scale(2.0);
        analytic.data_mut()[1] += 0.1;
        let err = finite_diff_check(sum_sq, &p, &analytic, 1e-5).unwrap();
        assert!(err >= 0.1 - 1e-8, "{err}");
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let p = Matrix::filled(1, 1, 0.0);
        let res = finite_diff_check(|m| 1.0 / m.get(0, 0).abs().min(0.0), &p, &p, 1e-5);
        assert!(matches!(res, Err(Error::Numeric(_))));
    }
}
