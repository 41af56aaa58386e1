use std::fmt::{Debug, Display, LowerExp};

use ndarray::ScalarOperand;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating point type the simulators and the network are written against.
///
/// Implemented for `f32` and `f64`. Circuit simulations and gradient checks
/// want `f64`; MNIST training is fast enough in `f32`.
pub trait Scalar:
    'static
    + Send
    + Sync
    + Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ScalarOperand
    + ndarray::LinalgScalar
    + Default
    + Debug
    + Display
    + LowerExp
{
    /// Converts an `f64` literal, rounding to the nearest representable value.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
