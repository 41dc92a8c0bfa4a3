//! Fits `t(x) = a·exp(c·xᵖ)` to (identity count, runtime) samples.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Grid for the exponent: p = k/1000 for k = 50, 55, …, 1000.
pub const P_GRID: std::ops::RangeInclusive<usize> = 0..=190;

fn grid_p<T: Scalar>(k: usize) -> T {
    T::from_count(50 + 5 * k) / T::from_count(1000)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeFitError {
    #[error("need at least 4 samples, got {0}")]
    InsufficientData(usize),
    #[error("sample {0}: x must be >= 1 and t > 0, both finite")]
    NonPositiveData(usize),
    #[error("all samples share one x value")]
    DegenerateX,
    #[error("runtimes do not grow with x")]
    NonIncreasingData,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeModel<T> {
    pub a: T,
    pub c: T,
    pub p: T,
    /// Sum of squared residuals of `ln t`.
    pub sse: T,
}

impl<T: Scalar> RuntimeModel<T> {
    pub fn predict(&self, x: T) -> T {
        self.a * (self.c * x.powf(self.p)).exp()
    }
}

/// Grid search over p; for each p, ordinary least squares of `ln t` on
/// `(1, xᵖ)`. Lowest residual wins, ties go to the smaller p.
pub fn fit_runtime_model<T: Scalar>(samples: &[(T, T)]) -> Result<RuntimeModel<T>, RuntimeFitError> {
    if samples.len() < 4 {
        return Err(RuntimeFitError::InsufficientData(samples.len()));
    }
    for (i, &(x, t)) in samples.iter().enumerate() {
        if !(x.is_finite() && t.is_finite() && x >= T::one() && t > T::zero()) {
            return Err(RuntimeFitError::NonPositiveData(i));
        }
    }
    let n = T::from_count(samples.len());
    let y: Vec<T> = samples.iter().map(|s| s.1.ln()).collect();
    let y_mean = y.iter().copied().sum::<T>() / n;

    let mut best: Option<RuntimeModel<T>> = None;
    for k in P_GRID {
        let p = grid_p::<T>(k);
        let u: Vec<T> = samples.iter().map(|s| s.0.powf(p)).collect();
        let u_mean = u.iter().copied().sum::<T>() / n;
        let (mut suu, mut suy) = (T::zero(), T::zero());
        for (&ui, &yi) in u.iter().zip(&y) {
            suu = suu + (ui - u_mean) * (ui - u_mean);
            suy = suy + (ui - u_mean) * (yi - y_mean);
        }
        if suu <= T::zero() {
            return Err(RuntimeFitError::DegenerateX);
        }
        let c = suy / suu;
        let log_a = y_mean - c * u_mean;
        let sse = u.iter().zip(&y).map(|(&ui, &yi)| (yi - log_a - c * ui).powi(2)).sum::<T>();
        if best.as_ref().is_none_or(|b| sse < b.sse) {
            best = Some(RuntimeModel { a: log_a.exp(), c, p, sse });
        }
    }
    let best = best.expect("grid is non-empty");
    if best.c <= T::zero() {
        return Err(RuntimeFitError::NonIncreasingData);
    }
    Ok(best)
}
