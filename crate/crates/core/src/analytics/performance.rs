//! Weekend thermal performance of classrooms and abrupt temperature events
//! (window opening, heating switching on).

use std::collections::{BTreeMap, VecDeque};

use chrono::{Datelike, NaiveDate, NaiveTime, Weekday};
use serde::Serialize;

use crate::model::{local_to_utc, Site, MS_PER_HOUR, MS_PER_MINUTE};
use crate::scalar::Scalar;

use super::{fill_gaps, AnalyticsError, Series, DEFAULT_WINDOW_MS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceConfig {
    /// Local analysis window on weekend days.
    pub start: NaiveTime,
    pub end: NaiveTime,
    /// Mean daily rise (°C) above which a room is flagged.
    pub flag_threshold: f64,
    pub gap_window_ms: i64,
}

impl Default for PerformanceConfig {
    fn default() -> Self {
        PerformanceConfig {
            start: NaiveTime::from_hms_opt(6, 0, 0).unwrap(),
            end: NaiveTime::from_hms_opt(18, 0, 0).unwrap(),
            flag_threshold: 8.0,
            gap_window_ms: DEFAULT_WINDOW_MS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoomDay {
    pub room_id: String,
    pub date: NaiveDate,
    /// max − min over the analysis window, °C.
    pub rise: f64,
    /// Largest increase within any one hour, °C.
    pub peak_rate_per_hour: f64,
    pub outdoor_rise: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoomRank {
    pub room_id: String,
    pub mean_rise: f64,
    pub days: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerformanceReport {
    pub days: Vec<RoomDay>,
    /// Worst first.
    pub ranking: Vec<RoomRank>,
}

fn is_weekend(d: NaiveDate) -> bool {
    matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
}

fn peak_rise<T: Scalar>(pts: &[super::Point<T>], span: i64) -> f64 {
    let mut best = 0.0f64;
    let mut lo = 0;
    // sliding minimum over [ts − span, ts)
    let mut mins: VecDeque<usize> = VecDeque::new();
    for j in 0..pts.len() {
        while lo < j && pts[lo].ts < pts[j].ts - span {
            lo += 1;
        }
        while mins.front().is_some_and(|&i| i < lo) {
            mins.pop_front();
        }
        if let Some(&i) = mins.front() {
            best = best.max((pts[j].value - pts[i].value).as_f64());
        }
        while mins.back().is_some_and(|&i| pts[i].value >= pts[j].value) {
            mins.pop_back();
        }
        mins.push_back(j);
    }
    best
}

fn spread<T: Scalar>(pts: &[super::Point<T>]) -> Option<f64> {
    let mut it = pts.iter().map(|p| p.value);
    let first = it.next()?;
    let (lo, hi) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Some((hi - lo).as_f64())
}

/// Temperature behaviour on weekend days `[from, to)` without occupants:
/// daily rise and peak hourly rate per room, ranked by mean daily rise.
pub fn weekend_performance<T: Scalar>(
    rooms: &BTreeMap<String, Series<T>>,
    weather: Option<&Series<T>>,
    site: &Site,
    from: NaiveDate,
    to: NaiveDate,
    cfg: PerformanceConfig,
) -> Result<PerformanceReport, AnalyticsError> {
    let mut days = Vec::new();
    let mut ranking = Vec::new();
    for (room, series) in rooms {
        if series.is_empty() {
            continue;
        }
        let filled = fill_gaps(&series.five_min_means(), cfg.gap_window_ms)?;
        let mut rises = Vec::new();
        let mut d = from;
        while d < to {
            if is_weekend(d) {
                let a = local_to_utc(site.timezone, d, cfg.start);
                let b = local_to_utc(site.timezone, d, cfg.end);
                let r = filled.range(a, b + 1);
                if let Some(rise) = spread(&filled.points[r.clone()]) {
                    let outdoor_rise = weather.and_then(|w| spread(&w.points[w.range(a, b + 1)]));
                    days.push(RoomDay {
                        room_id: room.clone(),
                        date: d,
                        rise,
                        peak_rate_per_hour: peak_rise(&filled.points[r], MS_PER_HOUR),
                        outdoor_rise,
                    });
                    rises.push(rise);
                }
            }
            d = d.succ_opt().expect("date range");
        }
        if !rises.is_empty() {
            let mean_rise = rises.iter().sum::<f64>() / rises.len() as f64;
            ranking.push(RoomRank {
                room_id: room.clone(),
                mean_rise,
                days: rises.len(),
                flagged: mean_rise > cfg.flag_threshold,
            });
        }
    }
    if days.is_empty() {
        return Err(AnalyticsError::NoWeekendData);
    }
    ranking.sort_by(|a, b| b.mean_rise.total_cmp(&a.mean_rise).then_with(|| a.room_id.cmp(&b.room_id)));
    Ok(PerformanceReport { days, ranking })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Rise,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThermalEvent<T> {
    /// End of the steepest detection.
    pub time: i64,
    pub start: i64,
    pub end: i64,
    pub direction: Direction,
    pub magnitude: T,
}

/// Default event threshold (°C) and span.
pub const EVENT_THRESHOLD: f64 = 2.0;
pub const EVENT_SPAN_MS: i64 = 15 * MS_PER_MINUTE;

/// Changes of at least `threshold` between two points at most `span_ms`
/// apart. Overlapping detections of one direction merge into a single event
/// carrying the largest magnitude.
pub fn detect_events<T: Scalar>(
    s: &Series<T>,
    threshold: T,
    span_ms: i64,
) -> Result<Vec<ThermalEvent<T>>, AnalyticsError> {
    if span_ms <= 0 {
        return Err(AnalyticsError::BadWindow);
    }
    if !(threshold > T::zero()) {
        return Err(AnalyticsError::Input("threshold must be positive".into()));
    }
    let pts = &s.points;
    let mut events = Vec::new();
    let mut open: [Option<ThermalEvent<T>>; 2] = [None, None];
    let mut maxs: VecDeque<usize> = VecDeque::new();
    let mut mins: VecDeque<usize> = VecDeque::new();
    for j in 0..pts.len() {
        if j > 0 {
            let v = pts[j - 1].value;
            while maxs.back().is_some_and(|&i| pts[i].value <= v) {
                maxs.pop_back();
            }
            maxs.push_back(j - 1);
            while mins.back().is_some_and(|&i| pts[i].value >= v) {
                mins.pop_back();
            }
            mins.push_back(j - 1);
        }
        let oldest = pts[j].ts - span_ms;
        while maxs.front().is_some_and(|&i| pts[i].ts < oldest) {
            maxs.pop_front();
        }
        while mins.front().is_some_and(|&i| pts[i].ts < oldest) {
            mins.pop_front();
        }
        let v = pts[j].value;
        let detections = [
            (Direction::Drop, maxs.front().map(|&i| (i, pts[i].value - v))),
            (Direction::Rise, mins.front().map(|&i| (i, v - pts[i].value))),
        ];
        for (slot, (direction, det)) in detections.into_iter().enumerate() {
            let Some((i, mag)) = det.filter(|(_, m)| *m >= threshold) else { continue };
            let (start, end) = (pts[i].ts, pts[j].ts);
            match &mut open[slot] {
                Some(ev) if start <= ev.end => {
                    ev.end = end;
                    if mag > ev.magnitude {
                        ev.magnitude = mag;
                        ev.time = end;
                    }
                }
                other => {
                    if let Some(done) = other.take() {
                        events.push(done);
                    }
                    *other = Some(ThermalEvent { time: end, start, end, direction, magnitude: mag });
                }
            }
        }
    }
    events.extend(open.into_iter().flatten());
    events.sort_by_key(|e| (e.start, e.time));
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ResourceId, Topology, MS_PER_SECOND};

    fn site() -> Site {
        Topology::from_toml_str("[[site]]\nid = \"R\"\ntimezone = \"UTC\"\nincorporated = \"2017-01-01\"\n")
            .unwrap()
            .sites
            .remove(0)
    }

    // 2017-10-07 is a Saturday.
    fn saturday() -> NaiveDate {
        NaiveDate::from_ymd_opt(2017, 10, 7).unwrap()
    }

    fn series(f: impl Fn(i64) -> f64, t0: i64, t1: i64, step: i64) -> Series<f64> {
        let pts = (0..).map(|k| t0 + k * step).take_while(|t| *t < t1).map(|t| (t, f(t))).collect();
        Series::new(ResourceId::new("room").unwrap(), "C", pts).unwrap()
    }

    fn weekend_rooms(ramp: bool) -> BTreeMap<String, Series<f64>> {
        let s = site();
        let (a, _) = s.local_day_range(saturday());
        let b = s.local_day_range(saturday().succ_opt().unwrap()).1;
        let r1 = move |t: i64| {
            let into_day = (t - a).rem_euclid(crate::model::MS_PER_DAY) - 6 * MS_PER_HOUR;
            let h = (into_day as f64 / MS_PER_HOUR as f64).clamp(0.0, 8.0);
            if ramp { 20.0 + 1.5 * h } else { 21.0 }
        };
        let mut rooms = BTreeMap::new();
        rooms.insert("R1".into(), series(r1, a, b, 5 * MS_PER_MINUTE));
        rooms.insert("R2".into(), series(|t| 21.0 + ((t - a) as f64 / MS_PER_HOUR as f64 / 12.0).min(2.0), a, b, 5 * MS_PER_MINUTE));
        rooms
    }

    #[test]
    fn flat_room_not_flagged() {
        let rooms = weekend_rooms(false);
        let rep = weekend_performance(&rooms, None, &site(), saturday(), saturday().succ_opt().unwrap(), Default::default()).unwrap();
        let r1 = rep.ranking.iter().find(|r| r.room_id == "R1").unwrap();
        assert_eq!(r1.mean_rise, 0.0);
        assert!(!r1.flagged);
    }

    #[test]
    fn ramp_room_flagged_and_ranked_first() {
        let rooms = weekend_rooms(true);
        let sun = saturday() + chrono::Duration::days(2);
        let rep = weekend_performance(&rooms, None, &site(), saturday(), sun, Default::default()).unwrap();
        assert_eq!(rep.ranking[0].room_id, "R1");
        assert!((rep.ranking[0].mean_rise - 12.0).abs() < 1e-9);
        assert!(rep.ranking[0].flagged);
        assert!(!rep.ranking[1].flagged);
        let d = rep.days.iter().find(|d| d.room_id == "R1").unwrap();
        assert!((d.peak_rate_per_hour - 1.5).abs() < 1e-9);
    }

    #[test]
    fn weekdays_ignored() {
        let rooms = weekend_rooms(true);
        let mon = saturday() + chrono::Duration::days(2);
        let err = weekend_performance(&rooms, None, &site(), mon, mon + chrono::Duration::days(5), Default::default());
        assert_eq!(err.unwrap_err(), AnalyticsError::NoWeekendData);
    }

    const STEP: i64 = 30 * MS_PER_SECOND;

    #[test]
    fn constant_no_events() {
        let s = series(|_| 21.0, 0, 6 * MS_PER_HOUR, STEP);
        assert!(detect_events(&s, 2.0, EVENT_SPAN_MS).unwrap().is_empty());
    }

    #[test]
    fn step_drop_single_event() {
        let t0 = 2 * MS_PER_HOUR;
        let drop = 10 * MS_PER_MINUTE;
        let f = move |t: i64| {
            let x = ((t - t0) as f64 / drop as f64).clamp(0.0, 1.0);
            21.0 - 2.5 * x
        };
        let ev = detect_events(&series(f, 0, 5 * MS_PER_HOUR, STEP), 2.0, EVENT_SPAN_MS).unwrap();
        assert_eq!(ev.len(), 1, "{ev:?}");
        assert_eq!(ev[0].direction, Direction::Drop);
        assert!((ev[0].magnitude - 2.5).abs() < 1e-12);
    }

    #[test]
    fn slow_drift_no_event() {
        let f = |t: i64| 21.0 - 2.0 * t as f64 / (6 * MS_PER_HOUR) as f64;
        assert!(detect_events(&series(f, 0, 6 * MS_PER_HOUR + 1, STEP), 2.0, EVENT_SPAN_MS).unwrap().is_empty());
    }

    #[test]
    fn separate_events_stay_separate() {
        let f = |t: i64| match t / MS_PER_HOUR {
            0 => 21.0,
            1 => 18.0,
            2 => 21.0,
            _ => 17.0,
        };
        let ev = detect_events(&series(f, 0, 4 * MS_PER_HOUR, STEP), 2.0, EVENT_SPAN_MS).unwrap();
        let dirs: Vec<_> = ev.iter().map(|e| e.direction).collect();
        assert_eq!(dirs, vec![Direction::Drop, Direction::Rise, Direction::Drop]);
    }

    #[test]
    fn bad_arguments() {
        let s = series(|_| 1.0, 0, 10, 1);
        assert!(detect_events(&s, 0.0, 1).is_err());
        assert!(detect_events(&s, 1.0, 0).is_err());
    }
}
