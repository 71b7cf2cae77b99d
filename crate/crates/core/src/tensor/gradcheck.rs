//! Central finite differences, the oracle every hand-derived gradient is
//! checked against.

use super::matrix::Matrix;
use crate::error::{FgpError, Result};

/// Entry `i` is `(loss(x + h·eᵢ) − loss(x − h·eᵢ)) / 2h`.
pub fn finite_diff_grad<F>(mut loss: F, at: &Matrix, h: f64) -> Result<Matrix>
where
    F: FnMut(&Matrix) -> f64,
{
    if !(h > 0.0) {
        return Err(FgpError::domain(format!("step must be positive, got {h}")));
    }
    let mut x = at.clone();
    let mut grad = Matrix::zeros(at.rows(), at.cols());
    for i in 0..at.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + h;
        let plus = loss(&x);
        x.data_mut()[i] = orig - h;
        let minus = loss(&x);
        x.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(FgpError::numeric(format!(
                "loss not finite while perturbing entry {i}"
            )));
        }
        grad.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
///
/// The floor keeps the ratio meaningful when both gradients vanish.
pub fn relative_error(analytic: &Matrix, numeric: &Matrix, floor: f64) -> f64 {
    debug_assert_eq!(analytic.shape(), numeric.shape());
    let diff = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    diff / analytic
        .frobenius_norm()
        .max(numeric.frobenius_norm())
        .max(floor)
}
