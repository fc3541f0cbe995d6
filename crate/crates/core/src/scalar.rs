use std::fmt;
use std::num::ParseFloatError;
use std::str::FromStr;

/// Floating-point scalar used by all geometry and cost math.
///
/// The whole pipeline instantiates at either `f32` or `f64`; the aliases at
/// the crate root pick one. `Display`/`FromStr` are required because poses,
/// intrinsics and mask confidences round-trip through text artifacts, and
/// Rust's float formatting is shortest-round-trip exact for both types.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + FromStr<Err = ParseFloatError>
    + fmt::Display
    + fmt::Debug
    + Send
    + Sync
    + 'static
{
    /// Conversion from an `f64` constant. Only fails for values no float
    /// type can represent, which the literals used here never are.
    #[inline]
    fn of(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("representable literal")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("float widens to f64")
    }

    #[inline]
    fn of_u64(v: u64) -> Self {
        // Counts above 2^53 would round at f64; pixel and mask counts here
        // are bounded by image area (< 2^32).
        Self::of(v as f64)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
