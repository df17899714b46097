//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point type the auction math is written against: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Sum of a slice; empty slices sum to zero.
pub(crate) fn total<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().sum()
}

/// Bisection for an increasing function `f` on `[lo, hi]`, returning the
/// point where `f` changes sign. Runs until the bracket can no longer be
/// split in the scalar's precision or `max_iter` halvings have happened.
pub(crate) fn bisect_increasing<T, F>(mut lo: T, mut hi: T, max_iter: usize, tol: T, f: F) -> T
where
    T: Scalar,
    F: Fn(T) -> T,
{
    let two = T::lit(2.0);
    for _ in 0..max_iter {
        let mid = lo + (hi - lo) / two;
        if mid <= lo || mid >= hi || hi - lo <= tol * T::one().max(mid.abs()) {
            break;
        }
        if f(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo + (hi - lo) / two
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt_two() {
        let r = bisect_increasing(0.0_f64, 2.0, 200, 0.0, |x| x * x - 2.0);
        assert!((r - 2.0_f64.sqrt()).abs() < 1e-15);
        let r32 = bisect_increasing(0.0_f32, 2.0, 200, 0.0, |x| x * x - 2.0);
        assert!((r32 - 2.0_f32.sqrt()).abs() < 1e-6);
    }
}
