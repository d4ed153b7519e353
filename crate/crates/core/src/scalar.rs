//! Scalar abstraction for the numeric kernels (ranking metrics, filters,
//! percentiles, dominance checks).

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// floating point: f32 or f64
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only if the value is unrepresentable,
    /// which cannot happen for finite inputs on `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Total order for finite values; NaN sorts as equal.
    #[inline]
    fn cmp_total(&self, other: &Self) -> std::cmp::Ordering {
        self.partial_cmp(other).unwrap_or(std::cmp::Ordering::Equal)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
