use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::model::AggregationType;

/// Kept samples per aggregation type; beyond this, reservoir sampling.
pub const RESERVOIR_CAPACITY: usize = 1 << 17;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventLatencySample {
    pub aggregation_type: AggregationType,
    /// Milliseconds.
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyStats {
    pub aggregation_type: AggregationType,
    pub count: u64,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

struct Reservoir {
    seen: u64,
    sum: f64,
    max: f64,
    samples: Vec<f64>,
}

/// Per-type latency reservoirs.
pub struct LatencyRecorder {
    by_type: BTreeMap<AggregationType, Reservoir>,
    rng: ChaCha8Rng,
    capacity: usize,
}

impl Default for LatencyRecorder {
    fn default() -> Self {
        Self::with_capacity(RESERVOIR_CAPACITY)
    }
}

impl LatencyRecorder {
    pub fn with_capacity(capacity: usize) -> Self {
        LatencyRecorder { by_type: BTreeMap::new(), rng: ChaCha8Rng::seed_from_u64(0x5eed), capacity: capacity.max(1) }
    }

    pub fn record(&mut self, sample: EventLatencySample) {
        let latency = sample.latency.max(0.0);
        let r = self.by_type.entry(sample.aggregation_type).or_insert_with(|| Reservoir {
            seen: 0,
            sum: 0.0,
            max: 0.0,
            samples: Vec::new(),
        });
        r.seen += 1;
        r.sum += latency;
        r.max = r.max.max(latency);
        if r.samples.len() < self.capacity {
            r.samples.push(latency);
        } else {
            let j = self.rng.gen_range(0..r.seen);
            if (j as usize) < self.capacity {
                r.samples[j as usize] = latency;
            }
        }
    }

    /// One row per aggregation type that has samples.
    pub fn report(&self) -> Vec<LatencyStats> {
        self.by_type
            .iter()
            .filter(|(_, r)| r.seen > 0)
            .map(|(t, r)| {
                let mut s = r.samples.clone();
                s.sort_by(f64::total_cmp);
                LatencyStats {
                    aggregation_type: *t,
                    count: r.seen,
                    mean_ms: r.sum / r.seen as f64,
                    median_ms: percentile(&s, 50.0),
                    p99_ms: percentile(&s, 99.0),
                    max_ms: r.max,
                }
            })
            .collect()
    }

    pub fn merge(&mut self, other: &LatencyRecorder) {
        for (t, r) in &other.by_type {
            for &l in &r.samples {
                self.record(EventLatencySample { aggregation_type: *t, latency: l });
            }
        }
    }
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}
