use super::Matrix;
use crate::error::{Error, Result};

/// Compares an analytic gradient against central differences.
///
/// `f` returns the loss and its analytic gradient at the given parameters.
/// The result is the maximum elementwise relative error, using
/// `max(|analytic|, |numeric|, 1e-8)` as the denominator.
pub fn grad_check<F>(f: F, params: &Matrix, h: f64) -> Result<f64>
where
    F: Fn(&Matrix) -> Result<(f64, Matrix)>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step h must be positive, got {h}"
        )));
    }
    let (loss, analytic) = f(params)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite { op: "grad_check" });
    }
    if analytic.shape() != params.shape() {
        return Err(Error::DimensionMismatch {
            op: "grad_check",
            left: params.shape(),
            right: analytic.shape(),
        });
    }
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for idx in 0..params.data().len() {
        let orig = params.data()[idx];
        probe.data_mut()[idx] = orig + h;
        let (plus, _) = f(&probe)?;
        probe.data_mut()[idx] = orig - h;
        let (minus, _) = f(&probe)?;
        probe.data_mut()[idx] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite { op: "grad_check" });
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic.data()[idx];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}
