use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the whole library is generic over.
///
/// Everything downstream needs is bundled here once: float arithmetic,
/// conversions for literals, assign ops so update loops read naturally,
/// iterator sums, formatting for reports, and thread-safety bounds so
/// sweeps can fan out with rayon.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + for<'a> Sum<&'a Self>
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Convert an `f64` constant into `Self`.
    ///
    /// Panics on values unrepresentable in `Self`; only use with finite
    /// literals and counts, never with data-dependent magnitudes.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 constant representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum<Self>
        + for<'a> Sum<&'a Self>
        + Debug
        + Display
        + LowerExp
        + Send
        + Sync
        + 'static
{
}
