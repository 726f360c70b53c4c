//! Scalar abstraction: all numeric kernels are generic over a real
//! floating-point type so the same code runs in `f32` or `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar type usable by every kernel in this crate.
pub trait Scalar:
    Float + NumAssign + Sum + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Convert an `f64` constant, panicking only for non-representable
    /// values (never happens for the small constants used here).
    fn from_f64_c(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable in scalar type")
    }
}

impl<T> Scalar for T where
    T: Float
        + NumAssign
        + Sum
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}
