//! Quartiles by linear interpolation between order statistics, and the
//! 3·IQR fences built on them.

use std::cmp::Ordering;

use crate::scalar::Scalar;

/// Interpolated quantile `q ∈ [0,1]` of an ascending slice.
///
/// Position `h = (n − 1)·q`; result `x[⌊h⌋] + (h − ⌊h⌋)·(x[⌊h⌋+1] − x[⌊h⌋])`.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], q: f64) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = T::lit(h - lo as f64);
    if lo + 1 >= sorted.len() {
        return Some(sorted[sorted.len() - 1]);
    }
    Some(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
}

/// `(Q1, Q3)` of an ascending slice.
pub fn quartiles<T: Scalar>(sorted: &[T]) -> Option<(T, T)> {
    Some((quantile_sorted(sorted, 0.25)?, quantile_sorted(sorted, 0.75)?))
}

/// Outlier fences `[Q1 − k·IQR, Q3 + k·IQR]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fences<T> {
    pub q1: T,
    pub q3: T,
    pub lower: T,
    pub upper: T,
}

/// Fence multiplier.
pub const IQR_FACTOR: f64 = 3.0;

pub fn fences<T: Scalar>(sorted: &[T]) -> Option<Fences<T>> {
    let (q1, q3) = quartiles(sorted)?;
    let iqr = q3 - q1;
    let k = T::lit(IQR_FACTOR);
    Some(Fences { q1, q3, lower: q1 - k * iqr, upper: q3 + k * iqr })
}

impl<T: Scalar> Fences<T> {
    pub fn contains(&self, v: T) -> bool {
        v >= self.lower && v <= self.upper
    }
}

pub(crate) fn total_cmp<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Multiset of values kept in ascending order; supports the trailing window.
#[derive(Debug, Clone, Default)]
pub struct SortedWindow<T> {
    v: Vec<T>,
}

impl<T: Scalar> SortedWindow<T> {
    pub fn new() -> Self {
        SortedWindow { v: Vec::new() }
    }

    pub fn insert(&mut self, x: T) {
        let i = self.v.partition_point(|y| total_cmp(y, &x) == Ordering::Less);
        self.v.insert(i, x);
    }

    /// Remove one copy of `x`; returns whether it was present.
    pub fn remove(&mut self, x: T) -> bool {
        let i = self.v.partition_point(|y| total_cmp(y, &x) == Ordering::Less);
        if i < self.v.len() && self.v[i] == x {
            self.v.remove(i);
            true
        } else {
            false
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// Smallest value `>= lo`.
    pub fn min_at_least(&self, lo: T) -> Option<T> {
        let i = self.v.partition_point(|y| *y < lo);
        self.v.get(i).copied()
    }

    /// Largest value `<= hi`.
    pub fn max_at_most(&self, hi: T) -> Option<T> {
        let i = self.v.partition_point(|y| *y <= hi);
        i.checked_sub(1).map(|j| self.v[j])
    }
}
