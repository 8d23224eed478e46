use crate::model::MS_PER_FIVE_MIN;
use crate::scalar::Scalar;

use super::{AnalyticsError, Point, Series};

/// Fill every missing five-minute slot between the first and last point with
/// the mean of present values in the centered window `[t − W/2, t + W/2]`,
/// falling back to the last present value. Present values are untouched.
pub fn fill_gaps<T: Scalar>(s: &Series<T>, window_ms: i64) -> Result<Series<T>, AnalyticsError> {
    if window_ms <= 0 {
        return Err(AnalyticsError::BadWindow);
    }
    let (first, last) = match (s.points.first(), s.points.last()) {
        (Some(a), Some(b)) => (a.ts, b.ts),
        _ => return Err(AnalyticsError::EmptySeries),
    };
    if let Some(p) = s.points.iter().find(|p| p.ts.rem_euclid(MS_PER_FIVE_MIN) != 0) {
        return Err(AnalyticsError::Misaligned(p.ts));
    }
    // prefix[i] = sum of the first i present values
    let mut prefix = Vec::with_capacity(s.points.len() + 1);
    prefix.push(T::zero());
    for p in &s.points {
        let last = *prefix.last().unwrap();
        prefix.push(last + p.value);
    }
    let half = window_ms / 2;
    let slots = ((last - first) / MS_PER_FIVE_MIN + 1) as usize;
    let mut out = Vec::with_capacity(slots);
    let mut next = 0usize;
    let mut t = first;
    while t <= last {
        if s.points[next].ts == t {
            out.push(s.points[next]);
            next += 1;
        } else {
            let lo = s.points.partition_point(|p| p.ts < t - half);
            let hi = s.points.partition_point(|p| p.ts <= t + half);
            let value = if hi > lo {
                (prefix[hi] - prefix[lo]) / T::from_count(hi - lo)
            } else {
                s.points[next - 1].value
            };
            out.push(Point { ts: t, value, synthetic: true });
        }
        t += MS_PER_FIVE_MIN;
    }
    Ok(Series { resource_id: s.resource_id.clone(), unit: s.unit.clone(), points: out })
}
