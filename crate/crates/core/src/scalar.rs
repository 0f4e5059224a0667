//! Scalar abstraction for scores, affinities and likelihood arithmetic.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::engine::Codec;

/// Floating-point type used for relevance scores, edge weights and fitted parameters.
///
/// Implemented for `f32` and `f64`. The crate root exports `f64` aliases for every
/// generic record type.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + FromStr
    + Display
    + Debug
    + Default
    + Codec
    + serde::Serialize
    + Send
    + Sync
    + 'static
{
    /// Largest representable value strictly below `self`.
    fn next_down(self) -> Self;

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f64 {
    fn next_down(self) -> Self {
        f64::next_down(self)
    }
}

impl Scalar for f32 {
    fn next_down(self) -> Self {
        f32::next_down(self)
    }
}


#[cfg(test)]
mod tests {
    use super::Scalar;

    fn generic_next_down<S: Scalar>(v: S) -> S {
        v.next_down()
    }

    #[test]
    fn next_down_is_strictly_below() {
        for v in [1.0f64, -1.0, 0.0, 3.5e-300, 1e300] {
            let d = generic_next_down(v);
            assert!(d < v);
            assert_eq!(d.next_up(), v);
        }
        assert!(generic_next_down(2.0f32) < 2.0);
    }
}
