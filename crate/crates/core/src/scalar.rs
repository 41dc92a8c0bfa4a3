use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar used by the geometry, solver and metric code.
///
/// Implemented for [f32] and [f64] only. Formulas that do not need
/// transcendental functions (see [`crate::metrics::mgs`]) accept any signed
/// number type instead, which lets them run on exact rationals.
pub trait Scalar:
    Float + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Smallest representable value strictly greater than `self`.
    fn next_up(self) -> Self;

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to every Scalar")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count converts to every Scalar")
    }
}

impl Scalar for f32 {
    fn next_up(self) -> Self {
        f32::next_up(self)
    }
}

impl Scalar for f64 {
    fn next_up(self) -> Self {
        f64::next_up(self)
    }
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}
