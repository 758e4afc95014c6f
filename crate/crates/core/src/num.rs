//! Scalar abstraction shared by the numeric parts of the crate
//! (mask schedules, embedding similarity, accuracy reporting).

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumCast};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumCast
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from a count. Exact for counts below 2^24 (`f32`) or 2^53 (`f64`).
    fn from_count(n: usize) -> Self {
        <Self as NumCast>::from(n).expect("count representable as float")
    }

    fn from_f64_lossy(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("finite f64 converts")
    }

    fn to_f64_lossy(self) -> f64 {
        <f64 as NumCast>::from(self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Exact ratio used where floating drift is not acceptable (accuracies, shares).
pub type Ratio = num_rational::Ratio<u64>;

/// Signed exact ratio, for differences of accuracies.
pub type SignedRatio = num_rational::Ratio<i64>;

/// Converts an exact ratio to the scalar by a single rounding division.
pub fn ratio_to_scalar<S: Scalar>(r: Ratio) -> S {
    S::from_count(*r.numer() as usize) / S::from_count(*r.denom() as usize)
}

pub fn signed_ratio_to_scalar<S: Scalar>(r: SignedRatio) -> S {
    let mag = S::from_count(r.numer().unsigned_abs() as usize) / S::from_count(*r.denom() as usize);
    if *r.numer() < 0 {
        -mag
    } else {
        mag
    }
}
