//! Scalar abstraction so the whole pipeline runs in either `f32` or `f64`.

use std::fmt::{Debug, Display};

/// Floating-point scalar used throughout the energy model and solver.
///
/// Implemented for `f32` and `f64`; `f64` is the default via the type
/// aliases at the crate root.
pub trait Scalar:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` constant into the working scalar type.
///
/// Panics only if the target type cannot represent any `f64` at all, which
/// cannot happen for the provided `f32`/`f64` impls.
#[inline]
pub fn cast<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("scalar conversion from f64")
}

/// Numerically stable `ln(1 + e^x)`.
///
/// Used for every `-ln(sigmoid)` style energy so that saturated
/// probabilities still produce finite energies.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic sigmoid `1 / (1 + e^-x)`.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
