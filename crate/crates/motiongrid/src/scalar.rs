//! Floating-point scalar abstraction for the grid math.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumCast};

/// Scalar type the grid geometry is generic over: `f32` or `f64`.
///
/// Everything downstream of the file formats defaults to `f64`; 75 m of
/// range with 0.1 m cells leaves little margin for accumulated traversal
/// error in single precision, so `f32` is opt-in for memory-bound uses.
pub trait GridScalar:
    Float + FromPrimitive + NumCast + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless widening for mixed-precision bookkeeping (timestamps, stats).
    fn to_f64_lossy(self) -> f64 {
        NumCast::from(self).unwrap_or(f64::NAN)
    }

    /// Conversion from `f64` constants; panics on overflow, which cannot
    /// happen for the in-range constants used here.
    fn from_f64_const(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }
}

impl GridScalar for f32 {}
impl GridScalar for f64 {}
