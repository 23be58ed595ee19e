use super::Params;
use crate::{Error, Result};

/// Compares `analytic` against central finite differences of `loss` at
/// `params`, returning the largest `|a − n| / max(1, |a|, |n|)`.
pub fn grad_check<P, F>(params: &P, analytic: &P, epsilon: f64, loss: F) -> Result<f64>
where
    P: Params,
    F: Fn(&P) -> Result<f64>,
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside [1e-7, 1e-3]")));
    }
    let base = params.to_flat();
    let grad = analytic.to_flat();
    if grad.len() != base.len() {
        return Err(Error::Shape(format!(
            "analytic gradient has {} entries, parameters have {}",
            grad.len(),
            base.len()
        )));
    }
    let mut probe = params.clone();
    let mut flat = base.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        flat[i] = base[i] + epsilon;
        probe.set_flat(&flat);
        let plus = loss(&probe)?;
        flat[i] = base[i] - epsilon;
        probe.set_flat(&flat);
        let minus = loss(&probe)?;
        flat[i] = base[i];
        if !plus.is_finite() || !minus.is_finite() || !grad[i].is_finite() {
            return Err(Error::NonFinite(format!("gradient check at parameter {i}")));
        }
        let numeric = (plus - minus) / (2.0 * epsilon);
        let err = (grad[i] - numeric).abs() / 1f64.max(grad[i].abs()).max(numeric.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}
