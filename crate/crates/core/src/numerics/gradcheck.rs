use crate::{Error, Result};

/// Central-difference gradient of `f` at `x`.
pub fn central_difference_gradient<F>(f: F, x: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let up = f(&probe);
        probe[i] = x[i] - eps;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        out.push((up - down) / (2.0 * eps));
    }
    Ok(out)
}

/// Max over coordinates of `|analytic − numeric| / max(1, |analytic|)`.
pub fn finite_difference_gradcheck<F>(f: F, analytic: &[f64], x: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if analytic.len() != x.len() {
        return Err(Error::shape(x.len(), analytic.len()));
    }
    let numeric = central_difference_gradient(f, x, eps)?;
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max))
}
