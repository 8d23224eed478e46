//! Shared fixtures and brute-force oracles for the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{Datelike, TimeZone, Utc};
use schoolsense::engine::{Engine, EngineConfig};
use schoolsense::model::{AggregationType, Granularity, IntervalSummary, Reading, ResourceDescriptor, ResourceId, ResourceKind};
use schoolsense::query::Directory;
use schoolsense::store::Store;

pub const FIVE_MIN: i64 = 300_000;
pub const HOUR: i64 = 3_600_000;
pub const DAY: i64 = 86_400_000;

/// Sensor naming: `r<i>` on device `dev<i>`, sensor picked by type.
pub fn descriptor(i: usize, agg: AggregationType) -> ResourceDescriptor {
    let (kind, sensor, units) = match agg {
        AggregationType::Average => (ResourceKind::Environmental, "temperature", "C"),
        AggregationType::Total => (ResourceKind::Weather, "precipitation", "mm"),
        AggregationType::Power => (ResourceKind::Power, "current_l1", "A"),
    };
    ResourceDescriptor {
        resource_id: ResourceId::new(format!("r{i}")).unwrap(),
        device: format!("dev{i}"),
        sensor: sensor.to_string(),
        kind,
        units: units.to_string(),
        reporting_period: 30,
        site_id: "S".into(),
        room_id: None,
    }
}

pub fn directory(descs: &[ResourceDescriptor]) -> Arc<Directory> {
    let d = Directory::new();
    for x in descs {
        d.register_resource(x.clone()).unwrap();
    }
    Arc::new(d)
}

pub fn engine_at(root: &std::path::Path, dir: Arc<Directory>) -> Engine<f64> {
    let store = Arc::new(Store::open(root, dir).unwrap());
    Engine::new(EngineConfig::default(), store)
}

pub fn reading(d: &ResourceDescriptor, ts: i64, value: f64) -> Reading<f64> {
    Reading { resource_id: d.resource_id.clone(), device: d.device.clone(), sensor: d.sensor.clone(), value, timestamp: ts }
}

/// Interval start by plain calendar arithmetic (UTC).
pub fn start_of(ts: i64, g: Granularity) -> i64 {
    let floor = |w: i64| ts.div_euclid(w) * w;
    match g {
        Granularity::FiveMin => floor(FIVE_MIN),
        Granularity::Hour => floor(HOUR),
        Granularity::Day => floor(DAY),
        Granularity::Month | Granularity::Year => {
            let dt = Utc.timestamp_millis_opt(ts).unwrap();
            let month = if g == Granularity::Month { dt.month() } else { 1 };
            Utc.with_ymd_and_hms(dt.year(), month, 1, 0, 0, 0).unwrap().timestamp_millis()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expected {
    pub avg: f64,
    pub min: f64,
    pub max: f64,
    pub count: u64,
    pub total: Option<f64>,
    pub energy: Option<f64>,
}

/// Brute-force summaries per granularity. Readings are deduplicated on
/// timestamp (first value wins); five-minute buckets group raw values,
/// coarser buckets fold the next-finer expected summaries.
pub fn oracle(readings: &[(i64, f64)], agg: AggregationType) -> BTreeMap<Granularity, BTreeMap<i64, Expected>> {
    let mut seen = BTreeMap::new();
    for (ts, v) in readings {
        seen.entry(*ts).or_insert(*v);
    }
    let mut buckets: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (ts, v) in &seen {
        buckets.entry(start_of(*ts, Granularity::FiveMin)).or_default().push(*v);
    }
    let mut out = BTreeMap::new();
    let five: BTreeMap<i64, Expected> = buckets
        .into_iter()
        .map(|(k, vs)| {
            let n = vs.len() as f64;
            let sum: f64 = vs.iter().sum();
            let lo = vs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e = match agg {
                AggregationType::Average => Expected { avg: sum / n, min: lo, max: hi, count: vs.len() as u64, total: None, energy: None },
                AggregationType::Total => Expected { avg: sum / n, min: lo, max: hi, count: vs.len() as u64, total: Some(sum), energy: None },
                AggregationType::Power => {
                    let p = 230.0 * sum / n;
                    Expected { avg: p, min: 230.0 * lo, max: 230.0 * hi, count: vs.len() as u64, total: None, energy: Some(p * 5.0 / 60.0) }
                }
            };
            (k, e)
        })
        .collect();
    out.insert(Granularity::FiveMin, five);
    for pair in Granularity::ALL.windows(2) {
        let (fine, coarse) = (pair[0], pair[1]);
        let mut groups: BTreeMap<i64, Vec<Expected>> = BTreeMap::new();
        for (k, e) in &out[&fine] {
            groups.entry(start_of(*k, coarse)).or_default().push(e.clone());
        }
        let level = groups
            .into_iter()
            .map(|(k, cs)| {
                let n = cs.len() as f64;
                let e = Expected {
                    avg: cs.iter().map(|c| c.avg).sum::<f64>() / n,
                    min: cs.iter().map(|c| c.min).fold(f64::INFINITY, f64::min),
                    max: cs.iter().map(|c| c.max).fold(f64::NEG_INFINITY, f64::max),
                    count: cs.iter().map(|c| c.count).sum(),
                    total: cs[0].total.map(|_| cs.iter().filter_map(|c| c.total).sum()),
                    energy: cs[0].energy.map(|_| cs.iter().filter_map(|c| c.energy).sum()),
                };
                (k, e)
            })
            .collect();
        out.insert(coarse, level);
    }
    out
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

/// Compare stored summaries with the oracle; returns the first mismatch.
pub fn check_against_oracle(
    got: &[IntervalSummary<f64>],
    want: &BTreeMap<i64, Expected>,
    rel: f64,
) -> Result<(), String> {
    if got.len() != want.len() {
        return Err(format!("{} summaries, oracle has {}", got.len(), want.len()));
    }
    for s in got {
        let e = want.get(&s.interval.start).ok_or_else(|| format!("unexpected interval {:?}", s.interval))?;
        let opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (None, None) => true,
            (Some(a), Some(b)) => close(a, b, rel),
            _ => false,
        };
        let ok = close(s.avg, e.avg, rel)
            && close(s.min, e.min, rel)
            && close(s.max, e.max, rel)
            && s.count == e.count
            && opt(s.total, e.total)
            && opt(s.energy_wh, e.energy);
        if !ok {
            return Err(format!("{:?}: got {s:?}, want {e:?}", s.interval));
        }
    }
    Ok(())
}

/// Type-7 quantile over a sorted slice, written out independently.
pub fn q7(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per point: `Some(flagged)` when evaluated, `None` when skipped (warm-up
/// or too few window points). Trailing window `[ts − w, ts)`.
pub fn outlier_oracle(points: &[(i64, f64)], w: i64, min_points: usize) -> Vec<Option<bool>> {
    let first = points[0].0;
    points
        .iter()
        .map(|(ts, v)| {
            if *ts < first + w {
                return None;
            }
            let mut win: Vec<f64> = points.iter().filter(|(t, _)| *t >= ts - w && t < ts).map(|p| p.1).collect();
            if win.len() < min_points {
                return None;
            }
            win.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let (q1, q3) = (q7(&win, 0.25), q7(&win, 0.75));
            let iqr = q3 - q1;
            Some(*v < q1 - 3.0 * iqr || *v > q3 + 3.0 * iqr)
        })
        .collect()
}
