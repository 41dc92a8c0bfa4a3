//! Soft-margin linear SVM trained by deterministic full-batch subgradient
//! descent on
//!
//! ```text
//! (λ/2)·‖w‖² + (1/n)·Σ max(0, 1 − yᵢ(w·xᵢ + b))
//! ```
//!
//! with step `1/(λ·t)` at iteration `t` and an unregularized bias.

use crate::scalar::{dot, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmConfig<T> {
    /// Regularization strength λ.
    pub regularization: T,
    pub iterations: usize,
}

impl<T: Scalar> Default for SvmConfig<T> {
    fn default() -> Self {
        Self { regularization: T::one(), iterations: 2000 }
    }
}

/// Unnormalized separating hyperplane `weights·x + bias = 0`; class B on the
/// positive side.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperplane<T> {
    pub weights: Vec<T>,
    pub bias: T,
}

impl<T: Scalar> Hyperplane<T> {
    pub fn decision(&self, x: &[T]) -> T {
        dot(&self.weights, x) + self.bias
    }
}

/// Fits the hyperplane. Callers guarantee both classes are non-empty and all
/// points share one dimension.
///
/// Gradient contributions are accumulated per class and combined as
/// `Σ_B x − Σ_A x`, so swapping the two classes yields exactly the negated
/// hyperplane.
pub fn fit<T: Scalar>(class_a: &[&[T]], class_b: &[&[T]], config: &SvmConfig<T>) -> Hyperplane<T> {
    let dim = class_a.first().or(class_b.first()).map_or(0, |x| x.len());
    let n = T::from_count(class_a.len() + class_b.len());
    let lambda = config.regularization;
    let mut w = vec![T::zero(); dim];
    let mut b = T::zero();
    let mut sum_a = vec![T::zero(); dim];
    let mut sum_b = vec![T::zero(); dim];

    for t in 1..=config.iterations {
        sum_a.iter_mut().for_each(|v| *v = T::zero());
        sum_b.iter_mut().for_each(|v| *v = T::zero());
        let (mut count_a, mut count_b) = (0usize, 0usize);
        for x in class_a {
            // margin for label −1
            if dot(&w, x) + b > -T::one() {
                count_a += 1;
                sum_a.iter_mut().zip(x.iter()).for_each(|(s, &v)| *s = *s + v);
            }
        }
        for x in class_b {
            if dot(&w, x) + b < T::one() {
                count_b += 1;
                sum_b.iter_mut().zip(x.iter()).for_each(|(s, &v)| *s = *s + v);
            }
        }
        let step = T::one() / (lambda * T::from_count(t));
        for ((wi, &sb), &sa) in w.iter_mut().zip(&sum_b).zip(&sum_a) {
            let grad = lambda * *wi - (sb - sa) / n;
            *wi = *wi - step * grad;
        }
        let grad_b = -(T::from_count(count_b) - T::from_count(count_a)) / n;
        b = b - step * grad_b;
    }
    Hyperplane { weights: w, bias: b }
}
