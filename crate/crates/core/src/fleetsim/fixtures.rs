//! Constructed scenarios for the comfort and performance analyses.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use chrono::{Duration, NaiveDate};
use chrono_tz::Tz;

use crate::analytics::Series;
use crate::model::{ResourceId, Site, MS_PER_HOUR, MS_PER_MINUTE, MS_PER_SECOND};

pub fn site(id: &str, tz: Tz) -> Site {
    Site {
        id: id.to_string(),
        name: id.to_string(),
        timezone: tz,
        incorporated: NaiveDate::from_ymd_opt(2017, 1, 1).unwrap(),
        school_hours: crate::model::default_school_hours(),
        rooms: Vec::new(),
        resources: Vec::new(),
    }
}

fn sample(id: &str, t0: i64, t1: i64, step: i64, f: impl Fn(i64) -> f64) -> Series<f64> {
    let pts = (0..).map(|k| t0 + k * step).take_while(|t| *t < t1).map(|t| (t, f(t))).collect();
    Series::new(ResourceId::new(id).expect("fixture id"), "C", pts).expect("increasing fixture")
}

/// Prefabricated classroom on a sunny weekend day: 20 °C at 06:00 rising
/// linearly to 32 °C at 14:00, then holding. Five-minute samples over the local day.
pub fn r1_ramp(site: &Site, day: NaiveDate) -> Series<f64> {
    let (a, b) = site.local_day_range(day);
    let six = crate::model::local_to_utc(site.timezone, day, chrono::NaiveTime::from_hms_opt(6, 0, 0).unwrap());
    sample("R1.temperature", a, b, 5 * MS_PER_MINUTE, move |t| {
        let h = ((t - six) as f64 / MS_PER_HOUR as f64).clamp(0.0, 8.0);
        20.0 + 1.5 * h
    })
}

/// Well-behaved room: `base` with a gentle diurnal swing of `amplitude`.
pub fn steady_room(id: &str, site: &Site, day: NaiveDate, base: f64, amplitude: f64) -> Series<f64> {
    let (a, b) = site.local_day_range(day);
    sample(id, a, b, 5 * MS_PER_MINUTE, move |t| {
        base + amplitude * (PI * ((t - a) as f64 / (12 * MS_PER_HOUR) as f64)).sin().max(0.0)
    })
}

/// Window opening at `t_open`: 30 s samples, flat at 21 °C, then a linear
/// fall of `drop` °C over `over_ms`, then flat. Values are exact multiples.
pub fn window_open(t_open: i64, drop: f64, over_ms: i64, before_ms: i64, after_ms: i64) -> Series<f64> {
    let step = 30 * MS_PER_SECOND;
    let steps = over_ms / step;
    let t0 = t_open - before_ms;
    sample("R2.temperature", t0, t_open + over_ms + after_ms, step, move |t| {
        let k = ((t - t_open) / step).clamp(0, steps);
        21.0 - drop * k as f64 / steps as f64
    })
}

/// Inputs of one site's comfort evaluation.
pub struct ComfortFixture {
    pub site: Site,
    pub outdoor: Series<f64>,
    pub indoor: BTreeMap<String, Series<f64>>,
    pub from: NaiveDate,
    pub to: NaiveDate,
}

/// Naturally ventilated classroom with weak heating: the outdoor
/// temperature plus internal gains (6 °C while occupied, 3 °C otherwise),
/// never below 16 °C.
pub fn control_loop(site: &Site, outdoor: &Series<f64>, room: &str) -> Series<f64> {
    let pts = outdoor
        .points
        .iter()
        .map(|p| {
            let day = site.local_date(p.ts);
            let slots = crate::analytics::school_hour_slots(site, day);
            let occupied = slots.iter().any(|(a, b)| p.ts >= *a && p.ts < *b);
            let gain = if occupied { 6.0 } else { 3.0 };
            (p.ts, (p.value + gain).max(16.0))
        })
        .collect();
    Series::new(ResourceId::new(format!("{}.temperature", room)).unwrap(), "C", pts).unwrap()
}

/// Outdoor climate `mean ± swing`, diurnal, quarter-hourly samples from a
/// week before `from` (for the prevailing mean).
pub fn outdoor(site: &Site, from: NaiveDate, to: NaiveDate, mean: f64, swing: f64) -> Series<f64> {
    let a = site.local_day_range(from - Duration::days(7)).0;
    let b = site.local_day_range(to).0;
    let tz = site.timezone;
    sample("wx.temperature", a, b, 15 * MS_PER_MINUTE, move |t| {
        let local = crate::model::utc_datetime(t).with_timezone(&tz);
        let h = chrono::Timelike::num_seconds_from_midnight(&local) as f64 / 3600.0;
        mean + swing * (2.0 * PI * (h - 9.0) / 24.0).sin()
    })
}

/// Two sites under the same indoor control loop: a cold northern climate
/// and a mild southern one, two rooms each, one school week.
pub fn comfort_pair() -> (ComfortFixture, ComfortFixture) {
    let from = NaiveDate::from_ymd_opt(2018, 3, 5).unwrap();
    let to = from + Duration::days(5);
    let build = |id: &str, tz: Tz, mean: f64, swing: f64| {
        let s = site(id, tz);
        let out = outdoor(&s, from, to, mean, swing);
        let indoor =
            ["R1", "R2"].iter().map(|r| (r.to_string(), control_loop(&s, &out, &format!("{id}-{r}")))).collect();
        ComfortFixture { site: s, outdoor: out, indoor, from, to }
    };
    (
        build("north", chrono_tz::Europe::Stockholm, 11.0, 4.0),
        build("south", chrono_tz::Europe::Athens, 19.0, 2.0),
    )
}
