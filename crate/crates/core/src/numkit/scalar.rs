use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the numerical core is written against.
///
/// Training and gradient checks run in `f64`; `f32` is what the on-disk
/// formats hold and is supported for inference.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    #[inline]
    fn of(x: f64) -> Self {
        // Float + FromPrimitive never fails for finite f64 on f32/f64.
        Self::from_f64(x).unwrap()
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap()
    }

    #[inline]
    fn half() -> Self {
        Self::of(0.5)
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }

    /// Above this argument softplus returns its input unchanged.
    #[inline]
    fn softplus_cutoff() -> Self {
        Self::of(30.0)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
