use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write;

use chrono::NaiveDate;
use serde::Serialize;

use crate::model::{ResourceId, ResourceKind, Topology};
use crate::scalar::Scalar;
use crate::store::Store;

use super::{detect_outliers, AnalyticsError, OutlierConfig, Series};

/// Column set of the per-site table.
pub const QUALITY_HEADER: [&str; 6] = ["Site", "POS", "Sensors", "Start time", "Outages", "Outliers"];

/// What the store holds for one sensor in the reporting period.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SensorActivity {
    /// Site-local days with at least one stored reading.
    pub days: BTreeSet<NaiveDate>,
    pub points: u64,
    pub outliers: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteRow {
    pub site: String,
    pub pos: usize,
    pub sensors: usize,
    pub start_time: NaiveDate,
    pub sensor_days: u64,
    pub outage_days: u64,
    pub outages_pct: f64,
    pub outliers_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindRow {
    pub kind: ResourceKind,
    pub pos: usize,
    pub sensors: usize,
    pub inactive_pct: f64,
    pub outliers_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatrixCell {
    pub resource_id: ResourceId,
    pub date: NaiveDate,
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub sites: Vec<SiteRow>,
    pub kinds: Vec<KindRow>,
    /// Outage days per sensor, site-local dates.
    pub outages: BTreeMap<ResourceId, BTreeSet<NaiveDate>>,
    pub matrix: Vec<MatrixCell>,
}

#[derive(Default)]
struct Tally {
    locations: BTreeSet<(String, String)>,
    sensors: usize,
    sensor_days: u64,
    outage_days: u64,
    points: u64,
    outliers: u64,
}

impl Tally {
    fn outages_pct(&self) -> f64 {
        pct(self.outage_days, self.sensor_days)
    }
    fn outliers_pct(&self) -> f64 {
        pct(self.outliers, self.points)
    }
}

fn pct(n: u64, d: u64) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 * 100.0 / d as f64
    }
}

/// Outage and outlier percentages over site-local days `[from, to)`.
///
/// Each sensor is accounted from `max(from, site incorporation)`; a
/// sensor-day without any stored reading is an outage day.
pub fn availability_report(
    topo: &Topology,
    activity: &HashMap<ResourceId, SensorActivity>,
    from: NaiveDate,
    to: NaiveDate,
) -> Result<QualityReport, AnalyticsError> {
    if from >= to {
        return Err(AnalyticsError::Input(format!("empty period {from}..{to}")));
    }
    let empty = SensorActivity::default();
    let mut sites = Vec::new();
    let mut kinds: BTreeMap<ResourceKind, Tally> = BTreeMap::new();
    let mut outages = BTreeMap::new();
    let mut matrix = Vec::new();
    let mut fleet_days = 0u64;
    for site in &topo.sites {
        let start = from.max(site.incorporated);
        let mut t = Tally::default();
        for r in site.all_resources() {
            let act = activity.get(&r.resource_id).unwrap_or(&empty);
            let location = r.room_id.clone().unwrap_or_else(|| format!("@{}", r.kind.label()));
            let k = kinds.entry(r.kind).or_default();
            let mut missing = BTreeSet::new();
            let mut days = 0u64;
            let mut d = start;
            while d < to {
                let present = act.days.contains(&d);
                if !present {
                    missing.insert(d);
                }
                matrix.push(MatrixCell { resource_id: r.resource_id.clone(), date: d, present });
                days += 1;
                d = d.succ_opt().expect("date range");
            }
            for tally in [&mut t, k] {
                tally.locations.insert((site.id.clone(), location.clone()));
                tally.sensors += 1;
                tally.sensor_days += days;
                tally.outage_days += missing.len() as u64;
                tally.points += act.points;
                tally.outliers += act.outliers;
            }
            outages.insert(r.resource_id.clone(), missing);
        }
        fleet_days += t.sensor_days;
        sites.push(SiteRow {
            site: site.id.clone(),
            pos: t.locations.len(),
            sensors: t.sensors,
            start_time: site.incorporated,
            sensor_days: t.sensor_days,
            outage_days: t.outage_days,
            outages_pct: t.outages_pct(),
            outliers_pct: t.outliers_pct(),
        });
    }
    if fleet_days == 0 {
        return Err(AnalyticsError::NoData);
    }
    let kinds = kinds
        .into_iter()
        .map(|(kind, t)| KindRow {
            kind,
            pos: t.locations.len(),
            sensors: t.sensors,
            inactive_pct: t.outages_pct(),
            outliers_pct: t.outliers_pct(),
        })
        .collect();
    Ok(QualityReport { from, to, sites, kinds, outages, matrix })
}

impl QualityReport {
    pub fn sites_csv(&self) -> String {
        let mut s = QUALITY_HEADER.join(",");
        s.push('\n');
        for r in &self.sites {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.2},{:.2}",
                r.site, r.pos, r.sensors, r.start_time, r.outages_pct, r.outliers_pct
            );
        }
        s
    }

    pub fn kinds_csv(&self) -> String {
        let mut s = String::from("Name,POS,Sensors,Inactive,Outlier\n");
        for r in &self.kinds {
            let _ = writeln!(s, "{},{},{},{:.2},{:.2}", r.kind.label(), r.pos, r.sensors, r.inactive_pct, r.outliers_pct);
        }
        s
    }

    /// One row per (sensor, day).
    pub fn matrix_csv(&self) -> String {
        let mut s = String::from("resource_id,date,status\n");
        for c in &self.matrix {
            let _ = writeln!(s, "{},{},{}", c.resource_id, c.date, if c.present { "present" } else { "missing" });
        }
        s
    }
}

/// Read each resource's raw log over the period and count readings per
/// site-local day, plus outliers over the raw series.
pub fn collect_activity<T: Scalar>(
    store: &Store<T>,
    topo: &Topology,
    from: NaiveDate,
    to: NaiveDate,
    outliers: OutlierConfig,
) -> Result<HashMap<ResourceId, SensorActivity>, AnalyticsError> {
    let mut out = HashMap::new();
    for site in &topo.sites {
        let t0 = site.local_day_range(from).0;
        let t1 = site.local_day_range(to).0;
        for r in site.all_resources() {
            let raw = store.get_raw(&r.resource_id, t0, t1).map_err(|e| AnalyticsError::Input(e.to_string()))?;
            let mut act = SensorActivity { points: raw.len() as u64, ..Default::default() };
            for x in &raw {
                act.days.insert(site.local_date(x.timestamp));
            }
            let series = Series::from_readings(r.resource_id.clone(), r.units.clone(), &raw);
            if !series.is_empty() {
                act.outliers = detect_outliers(&series, outliers)?.1.len() as u64;
            }
            out.insert(r.resource_id, act);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOPO: &str = r#"
[[site]]
id = "A"
timezone = "Europe/Athens"
incorporated = "2017-01-01"

[[site.room]]
id = "A-r1"
orientation = "S"
[[site.room.resource]]
id = "A.r1.temp"
device = "dA1"
sensor = "temperature"
kind = "environmental"
units = "C"
[[site.room.resource]]
id = "A.r1.hum"
device = "dA1"
sensor = "humidity"
kind = "environmental"
units = "%"

[[site.resource]]
id = "A.power.l1"
device = "mA"
sensor = "current_l1"
kind = "power"
units = "A"
"#;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2017, 1, day).unwrap()
    }

    fn active(days: impl IntoIterator<Item = u32>, points: u64, outliers: u64) -> SensorActivity {
        SensorActivity { days: days.into_iter().map(d).collect(), points, outliers }
    }

    #[test]
    fn eight_of_ten_days() {
        let topo = Topology::from_toml_str(TOPO).unwrap();
        let mut act = HashMap::new();
        let id = |s: &str| ResourceId::new(s).unwrap();
        act.insert(id("A.r1.temp"), active((1..=10).filter(|x| *x != 3 && *x != 7), 800, 8));
        act.insert(id("A.r1.hum"), active(1..=10, 1000, 0));
        act.insert(id("A.power.l1"), active(1..=10, 200, 2));
        let rep = availability_report(&topo, &act, d(1), d(11)).unwrap();
        assert_eq!(rep.outages[&id("A.r1.temp")], [d(3), d(7)].into_iter().collect());
        let site = &rep.sites[0];
        assert_eq!((site.pos, site.sensors, site.sensor_days, site.outage_days), (2, 3, 30, 2));
        assert!((site.outages_pct - 200.0 / 30.0).abs() < 1e-12);
        assert!((site.outliers_pct - 0.5).abs() < 1e-12);
        let env = rep.kinds.iter().find(|k| k.kind == ResourceKind::Environmental).unwrap();
        assert_eq!((env.pos, env.sensors), (1, 2));
        assert!((env.inactive_pct - 10.0).abs() < 1e-12);
        assert_eq!(rep.matrix.len(), 30);
        assert!(rep.sites_csv().starts_with("Site,POS,Sensors,Start time,Outages,Outliers\n"));
        assert!(rep.matrix_csv().contains("A.r1.temp,2017-01-03,missing"));
    }

    #[test]
    fn starts_at_incorporation() {
        let topo = Topology::from_toml_str(&TOPO.replace("2017-01-01", "2017-01-06")).unwrap();
        let rep = availability_report(&topo, &HashMap::new(), d(1), d(11)).unwrap();
        assert_eq!(rep.sites[0].sensor_days, 15);
        assert_eq!(rep.sites[0].outages_pct, 100.0);
    }

    #[test]
    fn no_data() {
        let topo = Topology::from_toml_str(&TOPO.replace("2017-01-01", "2018-01-01")).unwrap();
        assert_eq!(availability_report(&topo, &HashMap::new(), d(1), d(11)).unwrap_err(), AnalyticsError::NoData);
    }
}
