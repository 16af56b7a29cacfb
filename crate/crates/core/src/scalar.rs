//! Scalar abstraction for the network engine.
//!
//! Layers, losses and the optimizer are written once against [`Scalar`].
//! Production code runs in `f32`; gradient checks run the same code in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from a literal.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("representable literal")
    }

    #[inline]
    fn to_f32_lossy(self) -> f32 {
        self.to_f32().unwrap_or(f32::NAN)
    }

    #[inline]
    fn from_f32_lossless(v: f32) -> Self {
        <Self as FromPrimitive>::from_f32(v).expect("f32 widens into every scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
