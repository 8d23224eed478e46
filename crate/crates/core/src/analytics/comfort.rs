//! Adaptive comfort model: comfort temperature `0.31·T_pm + 17.8 °C` with
//! an acceptability band, an air-speed extension of the upper limit, and
//! hourly evaluation during school hours.

use std::collections::BTreeMap;
use std::fmt::Write;

use chrono::{Duration, NaiveDate};
use chrono_tz::Tz;
use serde::Serialize;

use crate::model::{local_to_utc, utc_datetime, Site};
use crate::scalar::Scalar;

use super::{AnalyticsError, Series};

/// Prevailing means outside this range put the model out of its domain.
pub const APPLICABLE_RANGE: (f64, f64) = (10.0, 33.5);
/// Days averaged into the prevailing mean.
pub const PREVAILING_DAYS: i64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Acceptability {
    #[default]
    Eighty,
    Ninety,
}

impl Acceptability {
    pub fn half_width(self) -> f64 {
        match self {
            Acceptability::Eighty => 3.5,
            Acceptability::Ninety => 2.5,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ComfortConfig {
    pub acceptability: Acceptability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComfortBand<T> {
    pub comfort: T,
    pub lower: T,
    pub upper: T,
    pub applicable: bool,
}

impl<T: Scalar> ComfortBand<T> {
    pub fn contains(&self, t: T) -> bool {
        t >= self.lower && t <= self.upper
    }
}

/// Upper-limit extension for air speed (m/s).
fn wind_extension(wind: f64) -> f64 {
    if wind >= 1.2 {
        2.2
    } else if wind >= 0.9 {
        1.8
    } else if wind >= 0.6 {
        1.2
    } else {
        0.0
    }
}

pub fn comfort_band<T: Scalar>(prevailing_mean: T, wind: T, acceptability: Acceptability) -> ComfortBand<T> {
    let pm = prevailing_mean.as_f64();
    let comfort = 0.31 * pm + 17.8;
    let hw = acceptability.half_width();
    ComfortBand {
        comfort: T::lit(comfort),
        lower: T::lit(comfort - hw),
        upper: T::lit(comfort + hw + wind_extension(wind.as_f64())),
        applicable: pm >= APPLICABLE_RANGE.0 && pm <= APPLICABLE_RANGE.1,
    }
}

/// Mean value per site-local calendar day.
pub fn daily_means<T: Scalar>(s: &Series<T>, tz: Tz) -> BTreeMap<NaiveDate, T> {
    let mut acc: BTreeMap<NaiveDate, (T, usize)> = BTreeMap::new();
    for p in &s.points {
        let d = utc_datetime(p.ts).with_timezone(&tz).date_naive();
        let e = acc.entry(d).or_insert((T::zero(), 0));
        e.0 = e.0 + p.value;
        e.1 += 1;
    }
    acc.into_iter().map(|(d, (sum, n))| (d, sum / T::from_count(n))).collect()
}

/// Mean of the previous seven daily means; with fewer than seven available,
/// the same-day mean, and failing that whatever earlier days exist.
pub fn prevailing_mean<T: Scalar>(daily: &BTreeMap<NaiveDate, T>, day: NaiveDate) -> Option<T> {
    let prev: Vec<T> = daily.range(day - Duration::days(PREVAILING_DAYS)..day).map(|(_, v)| *v).collect();
    if prev.len() as i64 == PREVAILING_DAYS {
        return crate::scalar::mean(prev);
    }
    daily.get(&day).copied().or_else(|| crate::scalar::mean(prev))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyComfort {
    pub site_id: String,
    pub room_id: String,
    pub date: NaiveDate,
    pub score: f64,
    pub hours_evaluated: usize,
    pub hours_comfortable: usize,
}

/// School-hour slots `[start, end)` of a local day, UTC ms.
pub fn school_hour_slots(site: &Site, day: NaiveDate) -> Vec<(i64, i64)> {
    let (open, close) = site.school_hours;
    let t_close = local_to_utc(site.timezone, day, close);
    let mut out = Vec::new();
    let mut t = local_to_utc(site.timezone, day, open);
    while t < t_close {
        let next = (t + crate::model::MS_PER_HOUR).min(t_close);
        out.push((t, next));
        t = next;
    }
    out
}

/// Share of evaluable school hours of `day` whose mean indoor temperature
/// lies inside the band. Hours without indoor data, or whose band is out of
/// the model domain, are not evaluated. Wind is the hour mean, else the
/// school-day mean, else calm.
pub fn daily_comfort<T: Scalar>(
    indoor: &Series<T>,
    outdoor_daily: &BTreeMap<NaiveDate, T>,
    wind: Option<&Series<T>>,
    day: NaiveDate,
    site: &Site,
    room_id: &str,
    cfg: ComfortConfig,
) -> Result<DailyComfort, AnalyticsError> {
    let slots = school_hour_slots(site, day);
    let pm = prevailing_mean(outdoor_daily, day).ok_or(AnalyticsError::NoEvaluableHours)?;
    let day_wind = match (wind, slots.first(), slots.last()) {
        (Some(w), Some(a), Some(b)) => w.mean_in(a.0, b.1),
        _ => None,
    };
    let (mut evaluated, mut comfortable) = (0, 0);
    for (a, b) in slots {
        let Some(t_in) = indoor.mean_in(a, b) else { continue };
        let w = wind.and_then(|w| w.mean_in(a, b)).or(day_wind).unwrap_or_else(T::zero);
        let band = comfort_band(pm, w, cfg.acceptability);
        if !band.applicable {
            continue;
        }
        evaluated += 1;
        if band.contains(t_in) {
            comfortable += 1;
        }
    }
    if evaluated == 0 {
        return Err(AnalyticsError::NoEvaluableHours);
    }
    Ok(DailyComfort {
        site_id: site.id.clone(),
        room_id: room_id.to_string(),
        date: day,
        score: comfortable as f64 / evaluated as f64,
        hours_evaluated: evaluated,
        hours_comfortable: comfortable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteComfort {
    pub site_id: String,
    /// Room × day, defined scores only.
    pub rows: Vec<DailyComfort>,
    pub room_means: BTreeMap<String, f64>,
    pub site_mean: f64,
}

impl SiteComfort {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("site,room,date,score,hours_evaluated\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{:.4},{}", r.site_id, r.room_id, r.date, r.score, r.hours_evaluated);
        }
        s
    }
}

/// Daily comfort for every room and local day in `[from, to)`. `outdoor`
/// should reach back a week before `from` to feed the prevailing mean.
pub fn site_comfort<T: Scalar>(
    site: &Site,
    indoor: &BTreeMap<String, Series<T>>,
    outdoor: &Series<T>,
    wind: Option<&Series<T>>,
    from: NaiveDate,
    to: NaiveDate,
    cfg: ComfortConfig,
) -> Result<SiteComfort, AnalyticsError> {
    let daily = daily_means(outdoor, site.timezone);
    let mut rows = Vec::new();
    for (room, series) in indoor {
        let mut d = from;
        while d < to {
            match daily_comfort(series, &daily, wind, d, site, room, cfg) {
                Ok(dc) => rows.push(dc),
                Err(AnalyticsError::NoEvaluableHours) => {}
                Err(e) => return Err(e),
            }
            d = d.succ_opt().expect("date range");
        }
    }
    if rows.is_empty() {
        return Err(AnalyticsError::NoData);
    }
    let mut per_room: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in &rows {
        let e = per_room.entry(r.room_id.clone()).or_insert((0.0, 0));
        e.0 += r.score;
        e.1 += 1;
    }
    let site_mean = rows.iter().map(|r| r.score).sum::<f64>() / rows.len() as f64;
    Ok(SiteComfort {
        site_id: site.id.clone(),
        room_means: per_room.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
        rows,
        site_mean,
    })
}
