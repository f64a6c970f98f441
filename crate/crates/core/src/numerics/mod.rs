//! Dense linear algebra, deterministic randomness, optimizer steps and
//! gradient verification shared by every other module.

mod gradcheck;
mod matrix;
mod optim;
mod rng;

pub use gradcheck::{central_difference_gradient, finite_difference_gradcheck};
pub use matrix::{DenseMatrix, Transpose};
pub use optim::{cosine_lr, sgd_momentum_step, LrSchedule, OptimizerState};
pub use rng::{derive_seed, RngStream};

use crate::{Error, Result};

/// Norms at or below this are treated as zero by [`l2_normalize`].
pub const NORM_TOLERANCE: f64 = 1e-12;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Scale `v` to unit Euclidean norm.
///
/// A zero (or numerically zero) input is an error rather than being nudged by
/// an epsilon: a vanishing contrastive embedding means training went wrong.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::ZeroVector { norm: 0.0 });
    }
    let n = norm(v);
    if !n.is_finite() {
        return Err(Error::NonFinite("vector norm".into()));
    }
    if n <= NORM_TOLERANCE {
        return Err(Error::ZeroVector { norm: n });
    }
    Ok(v.iter().map(|x| x / n).collect())
}
