//! Continuous computation engine: per-resource cascaded interval aggregation.
//!
//! Each resource owns one ring of at most `retention` slots per granularity.
//! A five-minute slot keeps the raw events of its interval; a coarser slot
//! keeps the current summaries of its children. Every accepted reading updates
//! its five-minute slot and re-derives the HOUR, DAY, MONTH and YEAR parents,
//! writing all five summaries through to the store.

mod aggregate;
mod latency;
mod worker;

pub use aggregate::{aggregate_power, roll_up, DEFAULT_NOMINAL_VOLTAGE};
pub use latency::{percentile, EventLatencySample, LatencyRecorder, LatencyStats, RESERVOIR_CAPACITY};
pub use worker::{EngineWorker, WorkerReport};

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::model::{align, AggregationType, Granularity, IntervalKey, IntervalSummary, ModelError, Reading, ResourceId};
use crate::query::Dispatcher;
use crate::scalar::Scalar;
use crate::store::Store;

use aggregate::summarize_events;

/// Interval slots retained per granularity per resource.
pub const DEFAULT_RETENTION: usize = 48;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("unknown resource {0}")]
    UnknownResource(ResourceId),
    #[error("reading at {timestamp} is older than the oldest retained interval starting {oldest}")]
    TooOld { timestamp: i64, oldest: i64 },
    #[error("invalid reading: {0}")]
    InvalidReading(#[from] ModelError),
    #[error("negative current {0} on a power resource")]
    NegativeCurrent(f64),
    #[error("no samples")]
    NoSamples,
    #[error("sample at {0} lies outside the interval")]
    SampleOutsideInterval(i64),
    #[error("no children to roll up")]
    EmptyChildren,
    #[error("child {0:?} is not inside the parent interval")]
    ChildOutsideParent(IntervalKey),
    #[error("store: {0}")]
    Store(String),
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub retention: usize,
    pub nominal_voltage: f64,
    /// Per-resource nominal voltage overrides.
    pub voltage_overrides: HashMap<ResourceId, f64>,
    pub instrument: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            retention: DEFAULT_RETENTION,
            nominal_voltage: DEFAULT_NOMINAL_VOLTAGE,
            voltage_overrides: HashMap::new(),
            instrument: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EngineStats {
    pub submitted: u64,
    pub aggregated: u64,
    pub duplicates: u64,
    pub too_old: u64,
    pub rejected: u64,
}

/// Memory held by aggregator state.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Footprint {
    pub resources: usize,
    /// Slots per granularity, finest first.
    pub slots: [usize; 5],
    /// Largest ring length seen on any resource.
    pub max_ring: usize,
    pub events: usize,
    pub children: usize,
}

impl Footprint {
    /// Retained slots, raw events and child summaries in total.
    pub fn items(&self) -> usize {
        self.slots.iter().sum::<usize>() + self.events + self.children
    }
}

struct FiveMinSlot<T> {
    key: IntervalKey,
    events: BTreeMap<i64, T>,
    summary: Option<IntervalSummary<T>>,
}

struct ParentSlot<T> {
    key: IntervalKey,
    children: BTreeMap<i64, IntervalSummary<T>>,
}

trait Keyed {
    fn key(&self) -> IntervalKey;
}

impl<T> Keyed for FiveMinSlot<T> {
    fn key(&self) -> IntervalKey {
        self.key
    }
}

impl<T> Keyed for ParentSlot<T> {
    fn key(&self) -> IntervalKey {
        self.key
    }
}

/// Ordered ring of at most `cap` slots; the oldest interval is evicted first.
struct Ring<S> {
    slots: VecDeque<S>,
}

enum Locate {
    Found(usize),
    Insert(usize),
    TooOld(i64),
}

impl<S: Keyed> Ring<S> {
    fn new() -> Self {
        Ring { slots: VecDeque::new() }
    }

    fn locate(&self, start: i64, cap: usize) -> Locate {
        match self.slots.binary_search_by_key(&start, |s| s.key().start) {
            Ok(i) => Locate::Found(i),
            Err(0) if self.slots.len() >= cap => Locate::TooOld(self.slots[0].key().start),
            Err(i) => Locate::Insert(i),
        }
    }

    /// Index of the slot for `key`, creating it (and evicting) as needed.
    fn slot(&mut self, key: IntervalKey, cap: usize, make: impl FnOnce() -> S) -> usize {
        match self.locate(key.start, cap) {
            Locate::Found(i) => i,
            Locate::Insert(i) => {
                self.slots.insert(i, make());
                if self.slots.len() > cap {
                    self.slots.pop_front();
                    i - 1
                } else {
                    i
                }
            }
            Locate::TooOld(_) => unreachable!("checked before mutation"),
        }
    }
}

struct ResourceAggregator<T> {
    agg: AggregationType,
    v_nom: T,
    five: Ring<FiveMinSlot<T>>,
    // HOUR, DAY, MONTH, YEAR
    parents: [Ring<ParentSlot<T>>; 4],
}

pub struct Engine<T: Scalar> {
    cfg: EngineConfig,
    store: Arc<Store<T>>,
    dispatcher: Option<Arc<Dispatcher<T>>>,
    resources: HashMap<ResourceId, ResourceAggregator<T>>,
    latency: LatencyRecorder,
    stats: EngineStats,
}

impl<T: Scalar> Engine<T> {
    pub fn new(cfg: EngineConfig, store: Arc<Store<T>>) -> Self {
        Engine {
            cfg,
            store,
            dispatcher: None,
            resources: HashMap::new(),
            latency: LatencyRecorder::default(),
            stats: EngineStats::default(),
        }
    }

    /// Deliver every summary update to real-time subscribers.
    pub fn with_dispatcher(mut self, d: Arc<Dispatcher<T>>) -> Self {
        self.dispatcher = Some(d);
        self
    }

    pub fn store(&self) -> &Arc<Store<T>> {
        &self.store
    }

    pub fn stats(&self) -> &EngineStats {
        &self.stats
    }

    pub fn set_instrumented(&mut self, on: bool) {
        self.cfg.instrument = on;
    }

    pub fn latency(&self) -> &LatencyRecorder {
        &self.latency
    }

    pub fn record_latency(&mut self, sample: EventLatencySample) {
        if self.cfg.instrument {
            self.latency.record(sample);
        }
    }

    pub fn latency_report(&self) -> Vec<LatencyStats> {
        self.latency.report()
    }

    /// The aggregation type the engine applies to `id`, if registered.
    pub fn aggregation_of(&self, id: &ResourceId) -> Option<AggregationType> {
        self.resources
            .get(id)
            .map(|r| r.agg)
            .or_else(|| self.store.directory().get(id).map(|d| d.aggregation()))
    }

    /// Process one reading. Returns the updated summaries, finest first;
    /// empty for an already-seen `(resource, timestamp)`.
    pub fn submit(&mut self, r: &Reading<T>) -> Result<Vec<IntervalSummary<T>>, EngineError> {
        let started = self.cfg.instrument.then(Instant::now);
        let out = self.submit_inner(r);
        if let Some(t0) = started {
            if let Some(agg) = self.resources.get(&r.resource_id).map(|a| a.agg) {
                let latency = t0.elapsed().as_secs_f64() * 1e3;
                self.latency.record(EventLatencySample { aggregation_type: agg, latency });
            }
        }
        out
    }

    fn submit_inner(&mut self, r: &Reading<T>) -> Result<Vec<IntervalSummary<T>>, EngineError> {
        self.stats.submitted += 1;
        if let Err(e) = r.validate() {
            self.stats.rejected += 1;
            return Err(e.into());
        }
        self.store.append_raw(r).map_err(|e| EngineError::Store(e.to_string()))?;
        if let Some(d) = &self.dispatcher {
            d.publish_reading(r);
        }
        if !self.resources.contains_key(&r.resource_id) {
            let Some(desc) = self.store.directory().get(&r.resource_id) else {
                self.stats.rejected += 1;
                return Err(EngineError::UnknownResource(r.resource_id.clone()));
            };
            let v = self.cfg.voltage_overrides.get(&r.resource_id).copied().unwrap_or(self.cfg.nominal_voltage);
            self.resources.insert(
                r.resource_id.clone(),
                ResourceAggregator {
                    agg: desc.aggregation(),
                    v_nom: T::lit(v),
                    five: Ring::new(),
                    parents: [Ring::new(), Ring::new(), Ring::new(), Ring::new()],
                },
            );
        }
        let cap = self.cfg.retention.max(1);
        let res = self.resources.get_mut(&r.resource_id).expect("inserted above");
        if res.agg == AggregationType::Power && r.value < T::zero() {
            self.stats.rejected += 1;
            return Err(EngineError::NegativeCurrent(r.value.as_f64()));
        }

        let keys = Granularity::ALL.map(|g| align(r.timestamp, g));
        if let Locate::TooOld(oldest) = res.five.locate(keys[0].start, cap) {
            self.stats.too_old += 1;
            return Err(EngineError::TooOld { timestamp: r.timestamp, oldest });
        }
        for (ring, key) in res.parents.iter().zip(&keys[1..]) {
            if let Locate::TooOld(oldest) = ring.locate(key.start, cap) {
                self.stats.too_old += 1;
                return Err(EngineError::TooOld { timestamp: r.timestamp, oldest });
            }
        }

        let i = res.five.slot(keys[0], cap, || FiveMinSlot { key: keys[0], events: BTreeMap::new(), summary: None });
        let slot = &mut res.five.slots[i];
        if slot.events.contains_key(&r.timestamp) {
            self.stats.duplicates += 1;
            return Ok(Vec::new());
        }
        slot.events.insert(r.timestamp, r.value);
        let mut child = summarize_events(
            &r.resource_id,
            keys[0],
            res.agg,
            res.v_nom,
            slot.events.iter().map(|(t, v)| (*t, *v)),
        )?;
        slot.summary = Some(child.clone());

        let mut updated = Vec::with_capacity(5);
        for (level, key) in keys[1..].iter().enumerate() {
            let ring = &mut res.parents[level];
            let j = ring.slot(*key, cap, || ParentSlot { key: *key, children: BTreeMap::new() });
            let parent = &mut ring.slots[j];
            let parent_summary = {
                parent.children.insert(child.interval.start, child.clone());
                roll_up(parent.children.values(), key.granularity, res.agg)?
            };
            updated.push(std::mem::replace(&mut child, parent_summary));
        }
        updated.push(child);

        self.stats.aggregated += 1;
        self.store.put_summaries(&updated);
        if let Some(d) = &self.dispatcher {
            d.publish(&updated);
        }
        Ok(updated)
    }

    /// Aggregator memory currently held.
    pub fn footprint(&self) -> Footprint {
        let mut f = Footprint { resources: self.resources.len(), ..Default::default() };
        for r in self.resources.values() {
            f.slots[0] += r.five.slots.len();
            f.max_ring = f.max_ring.max(r.five.slots.len());
            f.events += r.five.slots.iter().map(|s| s.events.len()).sum::<usize>();
            for (i, p) in r.parents.iter().enumerate() {
                f.slots[i + 1] += p.slots.len();
                f.max_ring = f.max_ring.max(p.slots.len());
                f.children += p.slots.iter().map(|s| s.children.len()).sum::<usize>();
            }
        }
        f
    }

    /// Intervals currently retained in memory for one resource and granularity.
    pub fn retained(&self, id: &ResourceId, g: Granularity) -> Vec<IntervalKey> {
        let Some(r) = self.resources.get(id) else { return Vec::new() };
        match g {
            Granularity::FiveMin => r.five.slots.iter().map(|s| s.key).collect(),
            _ => r.parents[g as usize - 1].slots.iter().map(|s| s.key).collect(),
        }
    }

    pub fn flush(&self) -> Result<(), EngineError> {
        self.store.flush().map_err(|e| EngineError::Store(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_time, ResourceDescriptor, ResourceKind, MS_PER_MINUTE};
    use crate::query::Directory;

    struct Fixture {
        _dir: tempfile::TempDir,
        engine: Engine<f64>,
    }

    fn fixture(retention: usize) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let directory = Arc::new(Directory::new());
        for (id, sensor, kind) in [
            ("t", "temperature", ResourceKind::Environmental),
            ("rain", "precipitation", ResourceKind::Weather),
            ("amps", "current", ResourceKind::Power),
        ] {
            directory
                .register_resource(ResourceDescriptor {
                    resource_id: ResourceId::new(id).unwrap(),
                    device: "DEV".into(),
                    sensor: sensor.into(),
                    kind,
                    units: String::new(),
                    reporting_period: 30,
                    site_id: "S".into(),
                    room_id: None,
                })
                .unwrap();
        }
        let store = Arc::new(Store::open(dir.path(), directory).unwrap());
        let cfg = EngineConfig { retention, ..Default::default() };
        Fixture { _dir: dir, engine: Engine::new(cfg, store) }
    }

    fn reading(id: &str, ts: i64, value: f64) -> Reading<f64> {
        Reading { resource_id: ResourceId::new(id).unwrap(), device: "DEV".into(), sensor: "x".into(), value, timestamp: ts }
    }

    fn t(s: &str) -> i64 {
        parse_time(s).unwrap()
    }

    #[test]
    fn singleton_five_min_summary() {
        let mut f = fixture(48);
        let out = f.engine.submit(&reading("t", t("2017-09-30T10:02:00Z"), 20.0)).unwrap();
        assert_eq!(out.len(), 5);
        let five = &out[0];
        assert_eq!(five.interval, IntervalKey { granularity: Granularity::FiveMin, start: t("2017-09-30T10:00:00Z") });
        assert_eq!((five.avg, five.min, five.max, five.count), (20.0, 20.0, 20.0, 1));
        assert_eq!(out.iter().map(|s| s.interval.granularity).collect::<Vec<_>>(), Granularity::ALL.to_vec());
    }

    #[test]
    fn mean_inside_one_interval() {
        let mut f = fixture(48);
        let base = t("2017-09-30T10:00:00Z");
        let mut last = Vec::new();
        for (i, v) in [10.0, 20.0, 30.0].into_iter().enumerate() {
            last = f.engine.submit(&reading("t", base + i as i64 * 30_000, v)).unwrap();
        }
        assert_eq!((last[0].avg, last[0].min, last[0].max, last[0].count), (20.0, 10.0, 30.0, 3));
    }

    #[test]
    fn hour_is_mean_of_present_five_min_slots() {
        let mut f = fixture(48);
        let base = t("2017-09-30T10:00:00Z");
        for i in 0..12 {
            f.engine.submit(&reading("t", base + i * 5 * MS_PER_MINUTE, 2.0)).unwrap();
        }
        let hour = f.engine.store().summaries(&ResourceId::new("t").unwrap(), Granularity::Hour, base, base + 1).unwrap();
        assert_eq!(hour[0].avg, 2.0);

        let mut f = fixture(48);
        f.engine.submit(&reading("t", base, 10.0)).unwrap();
        let out = f.engine.submit(&reading("t", base + 20 * MS_PER_MINUTE, 20.0)).unwrap();
        assert_eq!(out[1].interval.granularity, Granularity::Hour);
        assert_eq!(out[1].avg, 15.0);
    }

    #[test]
    fn duplicates_ignored() {
        let mut f = fixture(48);
        let ts = t("2017-09-30T10:00:00Z");
        f.engine.submit(&reading("t", ts, 10.0)).unwrap();
        assert!(f.engine.submit(&reading("t", ts, 99.0)).unwrap().is_empty());
        assert_eq!(f.engine.stats().duplicates, 1);
        let s = f.engine.store().summaries(&ResourceId::new("t").unwrap(), Granularity::FiveMin, ts, ts + 1).unwrap();
        assert_eq!((s[0].avg, s[0].count), (10.0, 1));
        // both copies remain in the raw log
        assert_eq!(f.engine.store().get_raw(&ResourceId::new("t").unwrap(), ts, ts + 1).unwrap().len(), 2);
    }

    #[test]
    fn too_old_is_stored_raw_but_not_aggregated() {
        let mut f = fixture(4);
        let base = t("2017-09-30T10:00:00Z");
        for i in 0..6 {
            f.engine.submit(&reading("t", base + i * 5 * MS_PER_MINUTE, 1.0)).unwrap();
        }
        let id = ResourceId::new("t").unwrap();
        assert_eq!(f.engine.retained(&id, Granularity::FiveMin).len(), 4);
        let err = f.engine.submit(&reading("t", base + 1, 5.0)).unwrap_err();
        assert!(matches!(err, EngineError::TooOld { .. }));
        assert_eq!(f.engine.stats().too_old, 1);
        assert_eq!(f.engine.store().get_raw(&id, base, base + 2).unwrap().len(), 2);
        // evicted intervals persist in the store
        let s = f.engine.store().summaries(&id, Granularity::FiveMin, base, base + 1).unwrap();
        assert_eq!((s[0].avg, s[0].count), (1.0, 1));
    }

    #[test]
    fn late_data_inside_window_recomputes_parents() {
        let mut f = fixture(48);
        let base = t("2017-09-30T10:00:00Z");
        f.engine.submit(&reading("t", base + 30 * MS_PER_MINUTE, 30.0)).unwrap();
        let out = f.engine.submit(&reading("t", base, 10.0)).unwrap();
        assert_eq!(out[1].avg, 20.0);
        assert_eq!(out[1].count, 2);
    }

    #[test]
    fn total_and_power_paths() {
        let mut f = fixture(48);
        let base = t("2017-09-30T10:00:00Z");
        f.engine.submit(&reading("rain", base, 1.5)).unwrap();
        let out = f.engine.submit(&reading("rain", base + 5 * MS_PER_MINUTE, 2.5)).unwrap();
        assert_eq!(out[1].total, Some(4.0));

        f.engine.submit(&reading("amps", base, 5.0)).unwrap();
        let out = f.engine.submit(&reading("amps", base + 30_000, 15.0)).unwrap();
        assert_eq!(out[0].avg, 2300.0);
        assert!((out[0].energy_wh.unwrap() - 2300.0 * 300.0 / 3600.0).abs() < 1e-9);
        assert_eq!(out[1].energy_wh, out[0].energy_wh);
        assert!(matches!(f.engine.submit(&reading("amps", base + 60_000, -1.0)), Err(EngineError::NegativeCurrent(_))));
    }

    #[test]
    fn unknown_and_invalid_readings() {
        let mut f = fixture(48);
        let ts = t("2017-09-30T10:00:00Z");
        assert!(matches!(f.engine.submit(&reading("ghost", ts, 1.0)), Err(EngineError::UnknownResource(_))));
        assert_eq!(f.engine.store().quarantine_count(), 1);
        assert!(matches!(f.engine.submit(&reading("t", ts, f64::NAN)), Err(EngineError::InvalidReading(_))));
        assert!(matches!(f.engine.submit(&reading("t", -5, 1.0)), Err(EngineError::InvalidReading(_))));
    }

    #[test]
    fn instrumented_latency_per_type() {
        let mut f = fixture(48);
        f.engine.set_instrumented(true);
        let base = t("2017-09-30T10:00:00Z");
        for i in 0..1000 {
            f.engine.submit(&reading("t", base + i * 1000, 20.0)).unwrap();
        }
        for i in 0..10 {
            f.engine.submit(&reading("rain", base + i * 1000, 0.1)).unwrap();
        }
        let rep = f.engine.latency_report();
        assert_eq!(rep.len(), 2);
        assert_eq!(rep[0].aggregation_type, AggregationType::Average);
        assert_eq!(rep[0].count, 1000);
        assert_eq!(rep[1].count, 10);
        assert!(rep[0].mean_ms >= 0.0);
    }

    #[test]
    fn ring_never_exceeds_retention() {
        let mut f = fixture(48);
        let base = t("2017-09-30T00:00:00Z");
        for i in 0..(3 * 24 * 12) {
            f.engine.submit(&reading("t", base + i * 5 * MS_PER_MINUTE, 1.0)).unwrap();
        }
        let fp = f.engine.footprint();
        assert_eq!(fp.slots[0], 48);
        assert_eq!(fp.slots[1], 48);
        assert_eq!(fp.slots[2], 3);
        assert!(fp.max_ring <= 48);
        assert_eq!(fp.events, 48);
    }
}
