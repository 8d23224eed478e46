use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::ingest::BusMessage;
use crate::model::{ResourceId, MS_PER_HOUR};

use super::signal::{unit, LocalTime};
use super::{Fleet, InjectedOutlier};

const NOISE_SALT: u64 = 0x0153_0000_0000_0002;
const OUTLIER_SALT: u64 = 0x0b71_0000_0000_0003;
const RAIN_SALT: u64 = 0x0a17_0000_0000_0004;

/// One emitted message.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMessage {
    pub sensor: usize,
    pub resource_id: ResourceId,
    pub topic: Arc<str>,
    pub value: f64,
    pub ts: i64,
    pub injected: bool,
}

impl SimMessage {
    /// Bus form: `device/sensor` and `value@epoch_ms`.
    pub fn to_bus(&self) -> BusMessage {
        BusMessage { topic: self.topic.to_string(), payload: format!("{}@{}", self.value, self.ts) }
    }

    pub fn to_line(&self) -> String {
        format!("{}\t{}@{}", self.topic, self.value, self.ts)
    }
}

/// Timestamp-ordered merge of every sensor's schedule; ties by sensor index.
pub struct FleetStream<'a> {
    fleet: &'a Fleet,
    heap: BinaryHeap<Reverse<(i64, usize, u64)>>,
    injected: Vec<InjectedOutlier>,
}

impl<'a> FleetStream<'a> {
    pub(crate) fn new(fleet: &'a Fleet) -> Self {
        let mut heap = BinaryHeap::with_capacity(fleet.sensors.len());
        for (i, s) in fleet.sensors.iter().enumerate() {
            let cal = &fleet.calendars[s.site];
            let first = cal.start() + s.phase_ms;
            if first < cal.end() {
                heap.push(Reverse((first, i, 0)));
            }
        }
        FleetStream { fleet, heap, injected: Vec::new() }
    }

    /// Outliers injected so far.
    pub fn injected(&self) -> &[InjectedOutlier] {
        &self.injected
    }

    pub fn take_injected(&mut self) -> Vec<InjectedOutlier> {
        std::mem::take(&mut self.injected)
    }
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

impl Iterator for FleetStream<'_> {
    type Item = SimMessage;

    fn next(&mut self) -> Option<SimMessage> {
        let cfg = &self.fleet.config;
        loop {
            let Reverse((ts, i, k)) = self.heap.pop()?;
            let s = &self.fleet.sensors[i];
            let cal = &self.fleet.calendars[s.site];
            let next = ts + s.period_ms;
            if next < cal.end() {
                self.heap.push(Reverse((next, i, k + 1)));
            }
            let day = cal.day_index(ts);
            let date = cal.date(day);
            if s.lost.contains(&date) {
                continue;
            }
            let t = LocalTime {
                hour: (ts - cal.bounds[day]) as f64 / MS_PER_HOUR as f64,
                weekday: cal.weekdays[day],
                day: cal.day_offset + day as u32,
            };
            let burst = unit(cfg.seed ^ RAIN_SALT, i as u64, (ts / MS_PER_HOUR) as u64);
            let clean = s.signal.eval(t, burst);
            let noisy = clean + s.noise_amplitude * (2.0 * unit(cfg.seed ^ NOISE_SALT, i as u64, k) - 1.0);
            // after warm-up, and with the whole trailing window on air
            let warm = ts - cal.start() >= cfg.outlier_warmup_ms
                && !(1..=((cfg.outlier_warmup_ms + 24 * MS_PER_HOUR - 1) / (24 * MS_PER_HOUR)) as usize)
                    .any(|back| day >= back && s.lost.contains(&cal.date(day - back)));
            let injected = cfg.outlier_rate > 0.0
                && warm
                && !s.signal.is_intermittent()
                && unit(cfg.seed ^ OUTLIER_SALT, i as u64, k) < cfg.outlier_rate;
            let value = round3(if injected { s.signal.outlier_value(s.noise_amplitude) } else { noisy });
            if injected {
                self.injected.push(InjectedOutlier {
                    resource_id: s.descriptor.resource_id.clone(),
                    ts,
                    value,
                    signal: clean,
                });
            }
            return Some(SimMessage {
                sensor: i,
                resource_id: s.descriptor.resource_id.clone(),
                topic: s.topic.clone(),
                value,
                ts,
                injected,
            });
        }
    }
}
