//! Numeric scalar abstraction.
//!
//! Every value flowing through the platform (readings, summaries, comfort
//! temperatures) is carried as a [`Scalar`]. The binaries use `f64`; `f32` is
//! supported for memory-constrained deployments.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + FromStr
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Arithmetic mean. `None` for an empty iterator.
pub fn mean<T: Scalar, I: IntoIterator<Item = T>>(values: I) -> Option<T> {
    let mut sum = T::zero();
    let mut n = 0usize;
    for v in values {
        sum = sum + v;
        n += 1;
    }
    (n > 0).then(|| sum / T::from_count(n))
}

/// Clamp `v` into `[lo, hi]`. Used to keep rounded means inside their extrema.
pub fn clamp<T: Scalar>(v: T, lo: T, hi: T) -> T {
    v.max(lo).min(hi)
}

/// Relative closeness with an absolute floor near zero.
pub fn approx_eq<T: Scalar>(a: T, b: T, rel: f64) -> bool {
    let (a, b) = (a.as_f64(), b.as_f64());
    let scale = a.abs().max(b.abs()).max(1.0);
    (a - b).abs() <= rel * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_empty_is_none() {
        assert_eq!(mean::<f64, _>(std::iter::empty()), None);
        assert_eq!(mean([1.0f32, 2.0, 3.0]), Some(2.0));
    }

    #[test]
    fn clamp_keeps_rounded_mean_in_range() {
        let m = mean([0.1f64, 0.1, 0.1]).unwrap();
        assert!(m > 0.1);
        assert_eq!(clamp(m, 0.1, 0.1), 0.1);
    }
}
