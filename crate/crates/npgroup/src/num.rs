//! Scalar abstraction: every statistical routine in this crate is generic
//! over a floating-point type implementing [`Float`].

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the crate.
///
/// Implemented for `f32` and `f64`. The bound pulls in `nalgebra::RealField`
/// for linear algebra plus the `num-traits` conversions used for constants.
pub trait Float:
    nalgebra::RealField + FromPrimitive + ToPrimitive + Copy + Default + std::iter::Sum
{
    /// Standard normal CDF Φ(x), evaluated in double precision.
    fn norm_cdf(self) -> Self {
        let x = self.to_f64().unwrap_or(f64::NAN);
        let phi = 0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2);
        Self::from_f64(phi).unwrap()
    }
}

impl Float for f32 {}
impl Float for f64 {}

/// Shorthand for lifting an `f64` constant into the generic scalar type.
pub(crate) fn fl<T: Float>(x: f64) -> T {
    T::from_f64(x).expect("constant not representable in scalar type")
}

/// Lift a `usize` count into the scalar type.
pub(crate) fn fu<T: Float>(x: usize) -> T {
    T::from_usize(x).expect("count not representable in scalar type")
}
