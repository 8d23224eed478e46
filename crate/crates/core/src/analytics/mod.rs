//! Data-quality and thermal analytics over time series: IQR outlier
//! detection, moving-window gap filling, availability reporting, adaptive
//! thermal comfort, weekend thermal performance and activity events.

mod availability;
mod comfort;
mod gapfill;
mod outliers;
mod performance;
pub mod quartile;

pub use availability::{
    availability_report, collect_activity, KindRow, MatrixCell, QualityReport, SensorActivity, SiteRow,
    QUALITY_HEADER,
};
pub use comfort::{
    comfort_band, daily_comfort, daily_means, prevailing_mean, site_comfort, Acceptability, ComfortBand,
    ComfortConfig, DailyComfort, SiteComfort, school_hour_slots,
};
pub use gapfill::fill_gaps;
pub use outliers::{detect_outliers, Fence, OutlierConfig, OutlierFlag};
pub use performance::{
    detect_events, weekend_performance, Direction, PerformanceConfig, PerformanceReport, RoomDay, RoomRank,
    ThermalEvent, EVENT_SPAN_MS, EVENT_THRESHOLD,
};

use serde::Serialize;
use thiserror::Error;

use crate::model::{align, Granularity, IntervalSummary, Reading, ResourceId, MS_PER_HOUR};
use crate::scalar::Scalar;

/// Default analysis window: 24 hours.
pub const DEFAULT_WINDOW_MS: i64 = 24 * MS_PER_HOUR;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("empty series")]
    EmptySeries,
    #[error("series timestamps must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("series value at index {0} is not finite")]
    NonFinite(usize),
    #[error("series point at {0} is not on the five-minute grid")]
    Misaligned(i64),
    #[error("window must be positive")]
    BadWindow,
    #[error("no data")]
    NoData,
    #[error("no evaluable school hours")]
    NoEvaluableHours,
    #[error("no weekend data")]
    NoWeekendData,
    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point<T> {
    pub ts: i64,
    pub value: T,
    /// True for values introduced by gap filling or outlier replacement.
    pub synthetic: bool,
}

/// Strictly increasing, finite time series of one resource.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series<T> {
    pub resource_id: ResourceId,
    pub unit: String,
    pub points: Vec<Point<T>>,
}

impl<T: Scalar> Series<T> {
    pub fn new(resource_id: ResourceId, unit: impl Into<String>, points: Vec<(i64, T)>) -> Result<Self, AnalyticsError> {
        for (i, w) in points.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                return Err(AnalyticsError::NotIncreasing(i + 1));
            }
        }
        if let Some(i) = points.iter().position(|(_, v)| !v.is_finite()) {
            return Err(AnalyticsError::NonFinite(i));
        }
        Ok(Series {
            resource_id,
            unit: unit.into(),
            points: points.into_iter().map(|(ts, value)| Point { ts, value, synthetic: false }).collect(),
        })
    }

    /// From raw readings: sorted, repeated timestamps keep the first value.
    pub fn from_readings(resource_id: ResourceId, unit: impl Into<String>, readings: &[Reading<T>]) -> Self {
        let mut pts: Vec<(i64, T)> =
            readings.iter().filter(|r| r.value.is_finite()).map(|r| (r.timestamp, r.value)).collect();
        pts.sort_by_key(|p| p.0);
        pts.dedup_by_key(|p| p.0);
        Series::new(resource_id, unit, pts).expect("sorted and deduplicated")
    }

    /// Five-minute grid series from summaries' averages.
    pub fn from_summaries(resource_id: ResourceId, unit: impl Into<String>, summaries: &[IntervalSummary<T>]) -> Self {
        let mut pts: Vec<(i64, T)> = summaries.iter().map(|s| (s.interval.start, s.avg)).collect();
        pts.sort_by_key(|p| p.0);
        pts.dedup_by_key(|p| p.0);
        Series::new(resource_id, unit, pts).expect("sorted and deduplicated")
    }

    /// Mean per five-minute interval, on the grid.
    pub fn five_min_means(&self) -> Series<T> {
        let mut out: Vec<(i64, T)> = Vec::new();
        let mut acc: Option<(i64, T, usize)> = None;
        for p in &self.points {
            let k = align(p.ts, Granularity::FiveMin).start;
            match &mut acc {
                Some((key, sum, n)) if *key == k => {
                    *sum = *sum + p.value;
                    *n += 1;
                }
                _ => {
                    if let Some((key, sum, n)) = acc.take() {
                        out.push((key, sum / T::from_count(n)));
                    }
                    acc = Some((k, p.value, 1));
                }
            }
        }
        if let Some((key, sum, n)) = acc {
            out.push((key, sum / T::from_count(n)));
        }
        Series::new(self.resource_id.clone(), self.unit.clone(), out).expect("grid keys increase")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = i64> + '_ {
        self.points.iter().map(|p| p.ts)
    }

    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.points.iter().map(|p| p.value)
    }

    /// Index range of points with `t0 <= ts < t1`.
    pub fn range(&self, t0: i64, t1: i64) -> std::ops::Range<usize> {
        let lo = self.points.partition_point(|p| p.ts < t0);
        let hi = self.points.partition_point(|p| p.ts < t1);
        lo..hi.max(lo)
    }

    /// Mean value over `[t0, t1)`.
    pub fn mean_in(&self, t0: i64, t1: i64) -> Option<T> {
        crate::scalar::mean(self.points[self.range(t0, t1)].iter().map(|p| p.value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id() -> ResourceId {
        ResourceId::new("s").unwrap()
    }

    #[test]
    fn series_invariants() {
        assert!(matches!(Series::new(id(), "", vec![(2, 1.0), (1, 1.0)]), Err(AnalyticsError::NotIncreasing(1))));
        assert!(matches!(Series::new(id(), "", vec![(1, f64::NAN)]), Err(AnalyticsError::NonFinite(0))));
        let s = Series::new(id(), "C", vec![(1, 1.0), (2, 3.0), (5, 5.0)]).unwrap();
        assert_eq!(s.range(2, 5), 1..2);
        assert_eq!(s.mean_in(0, 10), Some(3.0));
    }

    #[test]
    fn five_min_bucketing() {
        let s = Series::new(id(), "C", vec![(300_000, 1.0), (330_000, 3.0), (600_000, 5.0)]).unwrap();
        let g = s.five_min_means();
        assert_eq!(g.points.iter().map(|p| (p.ts, p.value)).collect::<Vec<_>>(), vec![(300_000, 2.0), (600_000, 5.0)]);
    }
}
