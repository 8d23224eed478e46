//! Synthetic school fleet: topology, deterministic bus-message streams with
//! scheduled losses and injected outliers, ground truth, and the benchmark
//! and pipeline drivers.

mod bench;
pub mod fixtures;
mod signal;
mod stream;

pub use bench::{bench, run_pipeline, BenchConfig, BenchReport, PipelineOptions, PipelineReport};
pub use signal::{LocalTime, Signal};
pub use stream::{FleetStream, SimMessage};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    local_day_range, Orientation, ResourceDescriptor, ResourceId, ResourceKind, Room, Site, Topology,
    MS_PER_HOUR, MS_PER_SECOND,
};

#[derive(Debug, Error)]
pub enum FleetError {
    #[error("invalid fleet config: {0}")]
    InvalidConfig(String),
    #[error("engine unavailable")]
    EngineUnavailable,
    #[error("{0}")]
    Io(String),
}

/// Drop every reading of `resource` on the site-local `date`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossRule {
    pub resource: String,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FleetConfig {
    pub seed: u64,
    pub sites: usize,
    /// Classrooms across the fleet, four environmental sensors each.
    pub rooms: usize,
    /// Sites with a rooftop weather station (4 sensors).
    pub weather_stations: usize,
    /// Sites with an atmospheric unit (8 sensors).
    pub atmospheric_units: usize,
    /// First site-local day of the stream.
    pub start: NaiveDate,
    pub days: u32,
    /// Cycled across sites.
    pub timezones: Vec<Tz>,
    /// Seconds.
    pub reporting_period: u32,
    /// Per-kind period overrides, seconds.
    pub periods: BTreeMap<ResourceKind, u32>,
    /// Site `i` is incorporated `i * stagger_days` after `start`.
    pub stagger_days: u32,
    pub loss: Vec<LossRule>,
    /// Chance that a sensor-day is lost entirely.
    pub random_loss: f64,
    /// Chance per eligible reading of an injected outlier.
    pub outlier_rate: f64,
    /// No injections within this span of a sensor's first reading or after a lost day.
    pub outlier_warmup_ms: i64,
    /// Noise amplitude relative to each signal's range.
    pub noise: f64,
}

impl Default for FleetConfig {
    fn default() -> Self {
        FleetConfig {
            seed: 1,
            sites: 1,
            rooms: 2,
            weather_stations: 1,
            atmospheric_units: 0,
            start: NaiveDate::from_ymd_opt(2017, 10, 2).unwrap(),
            days: 1,
            timezones: vec![chrono_tz::Europe::Athens],
            reporting_period: 30,
            periods: BTreeMap::new(),
            stagger_days: 0,
            loss: Vec::new(),
            random_loss: 0.0,
            outlier_rate: 0.0,
            outlier_warmup_ms: 24 * MS_PER_HOUR,
            noise: 0.01,
        }
    }
}

impl FleetConfig {
    /// 18 buildings, 850 sensors: 178 rooms × 4, 18 three-phase meters,
    /// 7 weather stations × 4 and 7 atmospheric units × 8.
    pub fn full_fleet() -> Self {
        FleetConfig { sites: 18, rooms: 178, weather_stations: 7, atmospheric_units: 7, ..Default::default() }
    }

    pub fn load(path: &Path) -> Result<Self, FleetError> {
        let text = std::fs::read_to_string(path).map_err(|e| FleetError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| FleetError::InvalidConfig(e.to_string()))
    }

    pub fn sensor_count(&self) -> usize {
        self.rooms * ENV_SENSORS.len()
            + self.sites * POWER_SENSORS.len()
            + self.weather_stations * WEATHER_SENSORS.len()
            + self.atmospheric_units * ATMOSPHERIC_SENSORS.len()
    }

    fn validate(&self) -> Result<(), FleetError> {
        let bad = |m: String| Err(FleetError::InvalidConfig(m));
        if self.sites == 0 {
            return bad("at least one site required".into());
        }
        if self.weather_stations > self.sites || self.atmospheric_units > self.sites {
            return bad("at most one weather station and one atmospheric unit per site".into());
        }
        if self.days == 0 {
            return bad("days must be positive".into());
        }
        if self.reporting_period == 0 || self.periods.values().any(|p| *p == 0) {
            return bad("reporting periods must be positive".into());
        }
        if self.timezones.is_empty() {
            return bad("at least one timezone required".into());
        }
        for (name, p) in [("random_loss", self.random_loss), ("outlier_rate", self.outlier_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be within [0, 1]"));
            }
        }
        if !(0.0..=0.5).contains(&self.noise) || self.outlier_warmup_ms < 0 {
            return bad("noise must be within [0, 0.5] and warm-up non-negative".into());
        }
        Ok(())
    }
}

const ENV_SENSORS: [&str; 4] = ["temperature", "humidity", "luminosity", "co2"];
const POWER_SENSORS: [&str; 3] = ["current_l1", "current_l2", "current_l3"];
const WEATHER_SENSORS: [&str; 4] = ["temperature", "humidity", "wind_speed", "precipitation"];
const ATMOSPHERIC_SENSORS: [(&str, f64, f64); 8] = [
    ("co", 0.4, 0.2),
    ("no2", 30.0, 12.0),
    ("o3", 60.0, 25.0),
    ("pm10", 25.0, 8.0),
    ("pm25", 12.0, 4.0),
    ("so2", 5.0, 2.0),
    ("pressure", 1013.0, 3.0),
    ("voc", 150.0, 40.0),
];

fn units(sensor: &str) -> &'static str {
    match sensor {
        "temperature" => "C",
        "humidity" => "%",
        "luminosity" => "lux",
        "co2" => "ppm",
        "wind_speed" => "m/s",
        "precipitation" => "mm",
        "pressure" => "hPa",
        s if s.starts_with("current") => "A",
        _ => "ug/m3",
    }
}

/// One simulated sensor.
#[derive(Debug, Clone)]
pub struct SimSensor {
    pub descriptor: ResourceDescriptor,
    pub topic: Arc<str>,
    pub site: usize,
    pub signal: Signal,
    pub period_ms: i64,
    pub phase_ms: i64,
    pub noise_amplitude: f64,
    pub lost: BTreeSet<NaiveDate>,
}

/// Site calendar: UTC start of each local day of the stream, plus its end.
#[derive(Debug, Clone)]
pub(crate) struct SiteCalendar {
    pub first_day: NaiveDate,
    /// `bounds[i]..bounds[i+1]` is local day `first_day + i`.
    pub bounds: Vec<i64>,
    pub weekdays: Vec<bool>,
    /// Offset of `first_day` from the fleet start, days.
    pub day_offset: u32,
}

impl SiteCalendar {
    fn new(tz: Tz, first_day: NaiveDate, end: NaiveDate, day_offset: u32) -> Self {
        let mut bounds = Vec::new();
        let mut weekdays = Vec::new();
        let mut d = first_day;
        while d < end {
            bounds.push(local_day_range(tz, d).0);
            weekdays.push(!matches!(d.weekday(), Weekday::Sat | Weekday::Sun));
            d = d.succ_opt().unwrap();
        }
        bounds.push(local_day_range(tz, end).0);
        SiteCalendar { first_day, bounds, weekdays, day_offset }
    }

    pub fn start(&self) -> i64 {
        self.bounds[0]
    }

    pub fn end(&self) -> i64 {
        *self.bounds.last().unwrap()
    }

    /// Local day index containing `ts` (which must lie in range).
    pub fn day_index(&self, ts: i64) -> usize {
        self.bounds.partition_point(|b| *b <= ts) - 1
    }

    pub fn date(&self, idx: usize) -> NaiveDate {
        self.first_day + Duration::days(idx as i64)
    }
}

/// Ground truth of a generated stream.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GroundTruth {
    /// Site-local days with zero emitted readings, per sensor.
    pub lost: BTreeMap<ResourceId, BTreeSet<NaiveDate>>,
    pub outliers: Vec<InjectedOutlier>,
    pub expected_messages: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InjectedOutlier {
    pub resource_id: ResourceId,
    pub ts: i64,
    pub value: f64,
    pub signal: f64,
}

/// A generated fleet: topology plus per-sensor schedules.
#[derive(Debug, Clone)]
pub struct Fleet {
    pub config: FleetConfig,
    pub topology: Topology,
    pub sensors: Vec<SimSensor>,
    pub(crate) calendars: Vec<SiteCalendar>,
}

impl Fleet {
    pub fn generate(config: FleetConfig) -> Result<Fleet, FleetError> {
        config.validate()?;
        let end = config.start + Duration::days(config.days as i64);
        let mut sites = Vec::new();
        let mut calendars = Vec::new();
        for i in 0..config.sites {
            let tz = config.timezones[i % config.timezones.len()];
            let offset = i as u32 * config.stagger_days;
            let incorporated = config.start + Duration::days(offset as i64);
            if incorporated >= end {
                return Err(FleetError::InvalidConfig(format!("site {i} incorporated after the simulated period")));
            }
            calendars.push(SiteCalendar::new(tz, incorporated, end, offset));
            sites.push(Site {
                id: format!("S{:02}", i + 1),
                name: format!("School {}", i + 1),
                timezone: tz,
                incorporated,
                school_hours: crate::model::default_school_hours(),
                rooms: Vec::new(),
                resources: Vec::new(),
            });
        }
        let period = |k: ResourceKind| config.periods.get(&k).copied().unwrap_or(config.reporting_period);
        let desc = |site: &Site, room: Option<&str>, device: String, sensor: &str, kind: ResourceKind| {
            let id = match room {
                Some(r) => format!("{r}.{sensor}"),
                None => format!("{}.{}.{}", site.id, kind.label().to_lowercase(), sensor),
            };
            ResourceDescriptor {
                resource_id: ResourceId::new(id).expect("generated ids are valid"),
                device,
                sensor: sensor.to_string(),
                kind,
                units: units(sensor).to_string(),
                reporting_period: period(kind),
                site_id: site.id.clone(),
                room_id: room.map(str::to_string),
            }
        };
        // rooms round-robin across sites
        for r in 0..config.rooms {
            let site = &mut sites[r % config.sites];
            let room_id = format!("{}-R{:02}", site.id, site.rooms.len() + 1);
            let device = format!("{}env", room_id.replace('-', "").to_lowercase());
            let resources = ENV_SENSORS
                .iter()
                .map(|s| desc(site, Some(&room_id), device.clone(), s, ResourceKind::Environmental))
                .collect();
            site.rooms.push(Room { id: room_id, orientation: Orientation::ALL[r % 8], resources });
        }
        let n_sites = config.sites;
        for (i, site) in sites.iter_mut().enumerate() {
            let mut res = Vec::new();
            for s in POWER_SENSORS {
                res.push(desc(site, None, format!("{}meter", site.id.to_lowercase()), s, ResourceKind::Power));
            }
            if i < config.weather_stations {
                for s in WEATHER_SENSORS {
                    res.push(desc(site, None, format!("{}wx", site.id.to_lowercase()), s, ResourceKind::Weather));
                }
            }
            if i >= n_sites - config.atmospheric_units {
                for (s, _, _) in ATMOSPHERIC_SENSORS {
                    res.push(desc(site, None, format!("{}atm", site.id.to_lowercase()), s, ResourceKind::Atmospheric));
                }
            }
            site.resources = res;
        }
        let topology = Topology { sites };

        let rule_targets: BTreeSet<&str> = config.loss.iter().map(|l| l.resource.as_str()).collect();
        let mut sensors = Vec::new();
        for (si, site) in topology.sites.iter().enumerate() {
            for d in site.all_resources() {
                let signal = signal_for(&d, site);
                let period_ms = d.reporting_period as i64 * MS_PER_SECOND;
                let idx = sensors.len() as i64;
                let cal = &calendars[si];
                let mut lost: BTreeSet<NaiveDate> = config
                    .loss
                    .iter()
                    .filter(|l| l.resource == d.resource_id.as_str())
                    .map(|l| l.date)
                    .filter(|date| *date >= cal.first_day && *date < end)
                    .collect();
                if config.random_loss > 0.0 {
                    for day in 0..cal.weekdays.len() {
                        if signal::unit(config.seed ^ LOSS_SALT, idx as u64, day as u64) < config.random_loss {
                            lost.insert(cal.date(day));
                        }
                    }
                }
                sensors.push(SimSensor {
                    topic: format!("{}/{}", d.device, d.sensor).into(),
                    site: si,
                    noise_amplitude: signal.noise_amplitude(config.noise),
                    signal,
                    period_ms,
                    // spread reports of different sensors over the period
                    phase_ms: (idx * 7919) % period_ms,
                    lost,
                    descriptor: d,
                });
            }
        }
        for target in rule_targets {
            if !sensors.iter().any(|s| s.descriptor.resource_id.as_str() == target) {
                return Err(FleetError::InvalidConfig(format!("loss rule names unknown resource {target}")));
            }
        }
        Ok(Fleet { config, topology, sensors, calendars })
    }

    /// Messages of one sensor that the schedule emits, ignoring losses.
    fn slots(&self, s: &SimSensor) -> u64 {
        let cal = &self.calendars[s.site];
        count_slots(cal.start() + s.phase_ms, cal.end(), s.period_ms)
    }

    /// Expected emissions: scheduled slots minus lost days (exact).
    pub fn expected_messages(&self) -> u64 {
        let mut n = 0;
        for s in &self.sensors {
            let cal = &self.calendars[s.site];
            n += self.slots(s);
            for d in &s.lost {
                let i = (*d - cal.first_day).num_days() as usize;
                let (a, b) = (cal.bounds[i], cal.bounds[i + 1]);
                let first = cal.start() + s.phase_ms;
                n -= count_slots(first, b, s.period_ms) - count_slots(first, a, s.period_ms);
            }
        }
        n
    }

    pub fn stream(&self) -> FleetStream<'_> {
        FleetStream::new(self)
    }

    /// Loss calendar and conservation count; outliers need a full pass.
    pub fn ground_truth(&self) -> GroundTruth {
        let mut stream = self.stream();
        for _ in stream.by_ref() {}
        GroundTruth {
            lost: self.sensors.iter().map(|s| (s.descriptor.resource_id.clone(), s.lost.clone())).collect(),
            outliers: stream.take_injected(),
            expected_messages: self.expected_messages(),
        }
    }

    /// Simulated `[start, end)` of the whole fleet, UTC ms.
    pub fn span(&self) -> (i64, i64) {
        let a = self.calendars.iter().map(|c| c.start()).min().unwrap();
        let b = self.calendars.iter().map(|c| c.end()).max().unwrap();
        (a, b)
    }

    /// Steady-state message rate, msg/s.
    pub fn nominal_rate(&self) -> f64 {
        self.sensors.iter().map(|s| 1000.0 / s.period_ms as f64).sum()
    }
}

const LOSS_SALT: u64 = 0x1055_0000_0000_0001;

/// Number of `first + k·period` with value `< end`.
fn count_slots(first: i64, end: i64, period: i64) -> u64 {
    if end <= first {
        0
    } else {
        ((end - first - 1) / period + 1) as u64
    }
}

fn signal_for(d: &ResourceDescriptor, site: &Site) -> Signal {
    match (d.kind, d.sensor.as_str()) {
        (ResourceKind::Environmental, "temperature") => {
            let o = d.room_id.as_deref().and_then(|r| site.room(r)).map(|r| r.orientation).unwrap_or(Orientation::N);
            Signal::IndoorTemperature { solar_gain: Signal::solar_gain(o) }
        }
        (ResourceKind::Environmental, "humidity") => Signal::IndoorHumidity,
        (ResourceKind::Environmental, "luminosity") => Signal::Luminosity,
        (ResourceKind::Environmental, _) => Signal::Co2,
        (ResourceKind::Weather, "temperature") => Signal::OutdoorTemperature,
        (ResourceKind::Weather, "humidity") => Signal::OutdoorHumidity,
        (ResourceKind::Weather, "wind_speed") => Signal::Wind,
        (ResourceKind::Weather, _) => Signal::Rain,
        (ResourceKind::Atmospheric, s) => {
            let (_, base, amplitude) = ATMOSPHERIC_SENSORS.iter().find(|a| a.0 == s).copied().unwrap_or(("", 10.0, 3.0));
            Signal::Atmospheric { base, amplitude }
        }
        (ResourceKind::Power, s) => {
            let phase = s.chars().last().and_then(|c| c.to_digit(10)).unwrap_or(1) as f64;
            Signal::Current { scale: 0.9 + 0.1 * phase }
        }
    }
}
