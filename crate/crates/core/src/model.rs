//! Core domain types shared by every module: readings, resources, aligned
//! intervals, summaries and the site topology.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Datelike, NaiveDate, NaiveTime, TimeZone, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::Scalar;

pub const MS_PER_SECOND: i64 = 1_000;
pub const MS_PER_MINUTE: i64 = 60 * MS_PER_SECOND;
pub const MS_PER_HOUR: i64 = 60 * MS_PER_MINUTE;
pub const MS_PER_DAY: i64 = 24 * MS_PER_HOUR;
pub const MS_PER_FIVE_MIN: i64 = 5 * MS_PER_MINUTE;

/// Default sensor reporting period, seconds.
pub const DEFAULT_REPORTING_PERIOD: u32 = 30;

/// Opaque resource identifier. Cheap to clone; path-safe by construction.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResourceId(Arc<str>);

impl ResourceId {
    pub fn new(id: impl AsRef<str>) -> Result<Self, ModelError> {
        let id = id.as_ref();
        let ok = !id.is_empty()
            && id.len() <= 128
            && id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
            && !id.starts_with('.');
        if ok {
            Ok(ResourceId(Arc::from(id)))
        } else {
            Err(ModelError::InvalidResourceId(id.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for ResourceId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for ResourceId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ResourceId::new(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid resource id {0:?}")]
    InvalidResourceId(String),
    #[error("timestamp must be positive, got {0}")]
    NonPositiveTimestamp(i64),
    #[error("value is not finite")]
    NonFiniteValue,
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("cannot parse time {0:?}")]
    BadTime(String),
}

/// One timestamped measurement from one sensor of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reading<T> {
    pub resource_id: ResourceId,
    pub device: String,
    pub sensor: String,
    pub value: T,
    /// UTC epoch milliseconds.
    pub timestamp: i64,
}

impl<T: Scalar> Reading<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.timestamp <= 0 {
            return Err(ModelError::NonPositiveTimestamp(self.timestamp));
        }
        if !self.value.is_finite() {
            return Err(ModelError::NonFiniteValue);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceKind {
    Environmental,
    Atmospheric,
    Weather,
    Power,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 4] = [
        ResourceKind::Environmental,
        ResourceKind::Atmospheric,
        ResourceKind::Weather,
        ResourceKind::Power,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ResourceKind::Environmental => "Environmental",
            ResourceKind::Atmospheric => "Atmospheric",
            ResourceKind::Weather => "Weather",
            ResourceKind::Power => "Power",
        }
    }
}

/// Fold applied to a resource's readings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationType {
    Average,
    Total,
    Power,
}

impl fmt::Display for AggregationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregationType::Average => "average",
            AggregationType::Total => "total",
            AggregationType::Power => "power",
        })
    }
}

impl AggregationType {
    pub const ALL: [AggregationType; 3] =
        [AggregationType::Average, AggregationType::Total, AggregationType::Power];

    /// Precipitation-like sensors are summed, electrical feeds become power,
    /// everything else is averaged.
    pub fn for_resource(kind: ResourceKind, sensor: &str) -> Self {
        let s = sensor.to_ascii_lowercase();
        if kind == ResourceKind::Power
            || s.starts_with("current")
            || s == "power"
            || s.starts_with("power_")
        {
            AggregationType::Power
        } else if s.starts_with("precipitation") || s.starts_with("rain") {
            AggregationType::Total
        } else {
            AggregationType::Average
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AggregationType::Average => "Average",
            AggregationType::Total => "Total",
            AggregationType::Power => "Power Consumption",
        }
    }
}

fn default_period() -> u32 {
    DEFAULT_REPORTING_PERIOD
}

/// A registered sensing endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceDescriptor {
    #[serde(rename = "id")]
    pub resource_id: ResourceId,
    pub device: String,
    pub sensor: String,
    pub kind: ResourceKind,
    #[serde(default)]
    pub units: String,
    /// Seconds.
    #[serde(default = "default_period")]
    pub reporting_period: u32,
    #[serde(default)]
    pub site_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room_id: Option<String>,
}

impl ResourceDescriptor {
    pub fn aggregation(&self) -> AggregationType {
        AggregationType::for_resource(self.kind, &self.sensor)
    }
}

/// Aggregation granularity, ordered finest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    FiveMin,
    Hour,
    Day,
    Month,
    Year,
}

impl Granularity {
    pub const ALL: [Granularity; 5] = [
        Granularity::FiveMin,
        Granularity::Hour,
        Granularity::Day,
        Granularity::Month,
        Granularity::Year,
    ];

    pub fn parent(self) -> Option<Granularity> {
        match self {
            Granularity::FiveMin => Some(Granularity::Hour),
            Granularity::Hour => Some(Granularity::Day),
            Granularity::Day => Some(Granularity::Month),
            Granularity::Month => Some(Granularity::Year),
            Granularity::Year => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::FiveMin => "five_min",
            Granularity::Hour => "hour",
            Granularity::Day => "day",
            Granularity::Month => "month",
            Granularity::Year => "year",
        }
    }

    /// Fixed width in ms, `None` for calendar granularities.
    pub fn fixed_width(self) -> Option<i64> {
        match self {
            Granularity::FiveMin => Some(5 * MS_PER_MINUTE),
            Granularity::Hour => Some(MS_PER_HOUR),
            Granularity::Day => Some(MS_PER_DAY),
            Granularity::Month | Granularity::Year => None,
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "five_min" | "5min" | "fivemin" | "5m" => Ok(Granularity::FiveMin),
            "hour" | "1h" => Ok(Granularity::Hour),
            "day" | "1d" => Ok(Granularity::Day),
            "month" => Ok(Granularity::Month),
            "year" => Ok(Granularity::Year),
            other => Err(format!("unknown granularity {other:?}")),
        }
    }
}

/// Aligned interval at one granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntervalKey {
    pub granularity: Granularity,
    /// UTC epoch ms of the interval start.
    pub start: i64,
}

impl IntervalKey {
    pub fn end(&self) -> i64 {
        match self.granularity.fixed_width() {
            Some(w) => self.start + w,
            None => {
                let d = utc_datetime(self.start).date_naive();
                let next = match self.granularity {
                    Granularity::Month if d.month() == 12 => {
                        NaiveDate::from_ymd_opt(d.year() + 1, 1, 1)
                    }
                    Granularity::Month => NaiveDate::from_ymd_opt(d.year(), d.month() + 1, 1),
                    _ => NaiveDate::from_ymd_opt(d.year() + 1, 1, 1),
                }
                .expect("valid calendar date");
                date_start_utc(next)
            }
        }
    }

    pub fn width_ms(&self) -> i64 {
        self.end() - self.start
    }

    pub fn contains(&self, ts: i64) -> bool {
        self.start <= ts && ts < self.end()
    }
}

/// Containing aligned interval of `timestamp` at granularity `g` (UTC).
pub fn align(timestamp: i64, g: Granularity) -> IntervalKey {
    let start = match g.fixed_width() {
        Some(w) => timestamp.div_euclid(w) * w,
        None => {
            let d = utc_datetime(timestamp).date_naive();
            let first = match g {
                Granularity::Month => NaiveDate::from_ymd_opt(d.year(), d.month(), 1),
                _ => NaiveDate::from_ymd_opt(d.year(), 1, 1),
            }
            .expect("valid calendar date");
            date_start_utc(first)
        }
    };
    IntervalKey { granularity: g, start }
}

/// Aggregate for one resource, granularity and aligned interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary<T> {
    pub resource_id: ResourceId,
    pub interval: IntervalKey,
    pub avg: T,
    pub min: T,
    pub max: T,
    pub count: u64,
    /// Sum of readings, TOTAL resources only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<T>,
    /// Energy in Wh, POWER resources only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_wh: Option<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Orientation {
    pub const ALL: [Orientation; 8] = [
        Orientation::N,
        Orientation::NE,
        Orientation::E,
        Orientation::SE,
        Orientation::S,
        Orientation::SW,
        Orientation::W,
        Orientation::NW,
    ];

    /// Compass bearing in degrees.
    pub fn bearing(self) -> f64 {
        45.0 * Orientation::ALL.iter().position(|o| *o == self).unwrap() as f64
    }
}

mod hhmm {
    use chrono::NaiveTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &(NaiveTime, NaiveTime), s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(2))?;
        seq.serialize_element(&t.0.format("%H:%M").to_string())?;
        seq.serialize_element(&t.1.format("%H:%M").to_string())?;
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(NaiveTime, NaiveTime), D::Error> {
        let [a, b] = <[String; 2]>::deserialize(d)?;
        let p = |s: &str| {
            NaiveTime::parse_from_str(s, "%H:%M")
                .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M:%S"))
                .map_err(serde::de::Error::custom)
        };
        Ok((p(&a)?, p(&b)?))
    }
}

pub fn default_school_hours() -> (NaiveTime, NaiveTime) {
    (
        NaiveTime::from_hms_opt(8, 30, 0).unwrap(),
        NaiveTime::from_hms_opt(16, 30, 0).unwrap(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub id: String,
    pub orientation: Orientation,
    #[serde(default, rename = "resource")]
    pub resources: Vec<ResourceDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub timezone: Tz,
    pub incorporated: NaiveDate,
    #[serde(with = "hhmm", default = "default_school_hours")]
    pub school_hours: (NaiveTime, NaiveTime),
    #[serde(default, rename = "room")]
    pub rooms: Vec<Room>,
    /// Site-level resources not placed in a room (weather station, meters).
    #[serde(default, rename = "resource")]
    pub resources: Vec<ResourceDescriptor>,
}

impl Site {
    /// Every resource of the site with `site_id`/`room_id` filled in.
    pub fn all_resources(&self) -> Vec<ResourceDescriptor> {
        let mut out = Vec::new();
        for r in &self.resources {
            let mut r = r.clone();
            r.site_id = self.id.clone();
            r.room_id = None;
            out.push(r);
        }
        for room in &self.rooms {
            for r in &room.resources {
                let mut r = r.clone();
                r.site_id = self.id.clone();
                r.room_id = Some(room.id.clone());
                out.push(r);
            }
        }
        out
    }

    pub fn room(&self, id: &str) -> Option<&Room> {
        self.rooms.iter().find(|r| r.id == id)
    }

    /// First site-level resource with the given kind and sensor name.
    pub fn site_resource(&self, kind: ResourceKind, sensor: &str) -> Option<&ResourceDescriptor> {
        self.resources.iter().find(|r| r.kind == kind && r.sensor == sensor)
    }

    /// UTC range `[start, end)` of a site-local calendar day.
    pub fn local_day_range(&self, day: NaiveDate) -> (i64, i64) {
        local_day_range(self.timezone, day)
    }

    pub fn local_date(&self, ts: i64) -> NaiveDate {
        utc_datetime(ts).with_timezone(&self.timezone).date_naive()
    }
}

/// Whole fleet: sites → rooms → resources.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    #[serde(default, rename = "site")]
    pub sites: Vec<Site>,
}

impl Topology {
    pub fn from_toml_str(s: &str) -> Result<Self, ModelError> {
        let topo: Topology =
            toml::from_str(s).map_err(|e| ModelError::InvalidTopology(e.to_string()))?;
        topo.validate(Utc::now().date_naive())?;
        Ok(topo)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::InvalidTopology(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("topology serializes")
    }

    pub fn validate(&self, today: NaiveDate) -> Result<(), ModelError> {
        let mut sites = HashSet::new();
        let mut ids = HashSet::new();
        let mut pairs = HashSet::new();
        for site in &self.sites {
            if !sites.insert(site.id.as_str()) {
                return Err(ModelError::InvalidTopology(format!("duplicate site {}", site.id)));
            }
            if site.incorporated > today {
                return Err(ModelError::InvalidTopology(format!(
                    "site {} incorporated in the future ({})",
                    site.id, site.incorporated
                )));
            }
            if site.school_hours.0 >= site.school_hours.1 {
                return Err(ModelError::InvalidTopology(format!(
                    "site {} school hours are empty",
                    site.id
                )));
            }
            for r in site.all_resources() {
                if r.reporting_period == 0 {
                    return Err(ModelError::InvalidTopology(format!(
                        "resource {} has zero reporting period",
                        r.resource_id
                    )));
                }
                if !ids.insert(r.resource_id.clone()) {
                    return Err(ModelError::InvalidTopology(format!(
                        "resource {} appears more than once",
                        r.resource_id
                    )));
                }
                if !pairs.insert((r.device.clone(), r.sensor.clone())) {
                    return Err(ModelError::InvalidTopology(format!(
                        "device/sensor {}/{} appears more than once",
                        r.device, r.sensor
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn site(&self, id: &str) -> Option<&Site> {
        self.sites.iter().find(|s| s.id == id)
    }

    pub fn resources(&self) -> Vec<ResourceDescriptor> {
        self.sites.iter().flat_map(|s| s.all_resources()).collect()
    }

    pub fn site_of(&self, resource: &ResourceId) -> Option<&Site> {
        self.sites
            .iter()
            .find(|s| s.all_resources().iter().any(|r| &r.resource_id == resource))
    }
}

pub fn utc_datetime(ts: i64) -> DateTime<Utc> {
    Utc.timestamp_millis_opt(ts).single().expect("timestamp in chrono range")
}

pub fn date_start_utc(d: NaiveDate) -> i64 {
    d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp_millis()
}

pub fn utc_date(ts: i64) -> NaiveDate {
    utc_datetime(ts).date_naive()
}

/// UTC instant of a site-local wall-clock time; DST gaps resolve forward.
pub fn local_to_utc(tz: Tz, day: NaiveDate, time: NaiveTime) -> i64 {
    let naive = day.and_time(time);
    match tz.from_local_datetime(&naive) {
        chrono::LocalResult::Single(t) => t.timestamp_millis(),
        chrono::LocalResult::Ambiguous(a, _) => a.timestamp_millis(),
        chrono::LocalResult::None => {
            let shifted = naive + chrono::Duration::hours(1);
            tz.from_local_datetime(&shifted)
                .earliest()
                .expect("one hour past a DST gap exists")
                .timestamp_millis()
        }
    }
}

pub fn local_day_range(tz: Tz, day: NaiveDate) -> (i64, i64) {
    let midnight = NaiveTime::from_hms_opt(0, 0, 0).unwrap();
    let next = day.succ_opt().expect("date range");
    (local_to_utc(tz, day, midnight), local_to_utc(tz, next, midnight))
}

/// Parse a CLI time: epoch ms, RFC 3339, `YYYY-MM-DDTHH:MM:SS` (UTC) or `YYYY-MM-DD`.
pub fn parse_time(s: &str) -> Result<i64, ModelError> {
    let s = s.trim();
    if let Ok(ms) = s.parse::<i64>() {
        return Ok(ms);
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.timestamp_millis());
    }
    if let Ok(t) = chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        return Ok(t.and_utc().timestamp_millis());
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(date_start_utc(d));
    }
    Err(ModelError::BadTime(s.to_string()))
}

pub fn format_time(ts: i64) -> String {
    utc_datetime(ts).format("%Y-%m-%dT%H:%M:%SZ").to_string()
}
