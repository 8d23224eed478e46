//! Paced load driver and the full simulate → ingest → engine → store pipeline.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::engine::{Engine, EngineConfig, EngineWorker, Footprint, LatencyStats};
use crate::ingest::{engine_queue, now_ms, BusMapper, IngestCounters, IngestError, LineIngestor};
use crate::query::Directory;
use crate::store::Store;

use super::{Fleet, FleetConfig, FleetError, GroundTruth};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Target messages per second.
    pub rate: f64,
    /// Seconds.
    pub duration: f64,
    pub seed: u64,
    /// Fleet whose stream supplies the messages; time is compressed to `rate`.
    pub fleet: FleetConfig,
    pub queue_capacity: usize,
    /// Store location; a scratch directory (removed afterwards) when unset.
    pub store_root: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            rate: 500.0,
            duration: 60.0,
            seed: 1,
            fleet: FleetConfig { days: 1, ..FleetConfig::full_fleet() },
            queue_capacity: 4096,
            store_root: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub target_rate: f64,
    pub duration_s: f64,
    pub sent: u64,
    pub accepted: u64,
    pub processed: u64,
    /// Readings dropped after the backoff budget ran out.
    pub drops: u64,
    /// Times the producer found the engine queue full.
    pub backpressure_events: u64,
    pub engine_errors: u64,
    /// Processed readings per second, first send to queue drained.
    pub throughput: f64,
    /// Readings per second the engine could sustain on submit time alone.
    pub capacity: f64,
    pub elapsed_s: f64,
    pub latency: Vec<LatencyStats>,
}

/// Scratch directory removed on drop.
struct Scratch(PathBuf);

impl Scratch {
    fn new(tag: &str) -> std::io::Result<Self> {
        let nanos = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap_or_default().as_nanos();
        let p = std::env::temp_dir().join(format!("schoolsense-{tag}-{}-{nanos}", std::process::id()));
        std::fs::create_dir_all(&p)?;
        Ok(Scratch(p))
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn io(e: impl std::fmt::Display) -> FleetError {
    FleetError::Io(e.to_string())
}

/// Drive a single instrumented engine worker at `rate` msg/s for `duration`
/// seconds through the line mapper, without blocking the producer.
pub fn bench(cfg: BenchConfig) -> Result<BenchReport, FleetError> {
    if !(cfg.rate >= 0.0 && cfg.rate.is_finite()) || !(cfg.duration >= 0.0 && cfg.duration.is_finite()) {
        return Err(FleetError::InvalidConfig("rate and duration must be non-negative".into()));
    }
    let n = (cfg.rate * cfg.duration).round() as u64;
    let empty = BenchReport {
        target_rate: cfg.rate,
        duration_s: cfg.duration,
        sent: 0,
        accepted: 0,
        processed: 0,
        drops: 0,
        backpressure_events: 0,
        engine_errors: 0,
        throughput: 0.0,
        capacity: 0.0,
        elapsed_s: 0.0,
        latency: Vec::new(),
    };
    if n == 0 {
        return Ok(empty);
    }

    let fleet = Fleet::generate(FleetConfig { seed: cfg.seed, ..cfg.fleet.clone() })?;
    if fleet.expected_messages() < n {
        return Err(FleetError::InvalidConfig(format!(
            "fleet emits {} messages, fewer than the {n} requested",
            fleet.expected_messages()
        )));
    }
    let scratch;
    let root = match &cfg.store_root {
        Some(p) => p.clone(),
        None => {
            scratch = Scratch::new("bench").map_err(io)?;
            scratch.0.clone()
        }
    };
    let directory = Arc::new(Directory::from_topology(&fleet.topology).map_err(io)?);
    let store = Arc::new(Store::<f64>::open(&root, directory.clone()).map_err(io)?);
    let engine = Engine::new(EngineConfig { instrument: true, ..Default::default() }, store);
    let (forwarder, rx) = engine_queue(cfg.queue_capacity.max(1));
    let worker = EngineWorker::spawn(engine, rx);
    let ingestor = LineIngestor::new(Arc::new(BusMapper::new(directory)), forwarder.clone());

    let period = Duration::from_secs_f64(1.0 / cfg.rate);
    let start = Instant::now();
    let mut sent = 0u64;
    for (i, m) in fleet.stream().take(n as usize).enumerate() {
        let due = start + period * i as u32;
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
        sent += 1;
        match ingestor.handle_line(&m.to_line(), now_ms()) {
            Err(IngestError::EngineUnavailable) => return Err(FleetError::EngineUnavailable),
            Err(e) => log::debug!("bench message rejected: {e}"),
            Ok(()) => {}
        }
    }
    let counters = ingestor.counters();
    let backpressure_events = forwarder.backpressure_events();
    drop(ingestor);
    drop(forwarder);
    let (engine, report) = worker.join();
    let drained = report.drained_at.unwrap_or_else(Instant::now);
    let elapsed = (drained - start).as_secs_f64();

    let latency = engine.latency_report();
    let busy_ms: f64 = latency.iter().map(|l| l.mean_ms * l.count as f64).sum();
    let recorded: u64 = latency.iter().map(|l| l.count).sum();
    Ok(BenchReport {
        sent,
        accepted: counters.accepted,
        processed: report.processed,
        drops: counters.dropped,
        backpressure_events,
        engine_errors: report.errors + report.too_old,
        throughput: report.processed as f64 / elapsed,
        capacity: if busy_ms > 0.0 { recorded as f64 / (busy_ms / 1e3) } else { f64::INFINITY },
        elapsed_s: elapsed,
        latency,
        ..empty
    })
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub store_root: PathBuf,
    pub queue_capacity: usize,
    /// Engine footprint sampled every this many readings (0 = never).
    pub sample_every: u64,
    pub instrument: bool,
}

impl PipelineOptions {
    pub fn new(store_root: impl Into<PathBuf>) -> Self {
        PipelineOptions { store_root: store_root.into(), queue_capacity: 4096, sample_every: 0, instrument: false }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub emitted: u64,
    pub ingest: IngestCounters,
    pub processed: u64,
    pub engine_errors: u64,
    pub too_old: u64,
    /// Raw readings written to the store.
    pub stored: u64,
    pub footprints: Vec<(u64, Footprint)>,
    pub final_footprint: Footprint,
    pub latency: Vec<LatencyStats>,
    pub ground_truth: GroundTruth,
    pub wall_s: f64,
}

/// Stream the whole fleet as fast as the engine drains it; nothing is dropped.
pub fn run_pipeline(fleet: &Fleet, opts: PipelineOptions) -> Result<PipelineReport, FleetError> {
    let directory = Arc::new(Directory::from_topology(&fleet.topology).map_err(io)?);
    let store = Arc::new(Store::<f64>::open(&opts.store_root, directory.clone()).map_err(io)?);
    let engine = Engine::new(EngineConfig { instrument: opts.instrument, ..Default::default() }, store.clone());
    let (forwarder, rx) = engine_queue(opts.queue_capacity.max(1));
    let worker = EngineWorker::spawn_sampled(engine, rx, opts.sample_every);
    let ingestor = LineIngestor::new(Arc::new(BusMapper::new(directory)), forwarder)
        .with_quarantine(store.clone())
        .with_blocking(true);

    let start = Instant::now();
    let mut emitted = 0u64;
    let mut stream = fleet.stream();
    for m in stream.by_ref() {
        emitted += 1;
        match ingestor.handle_line(&m.to_line(), now_ms()) {
            Err(IngestError::EngineUnavailable) => return Err(FleetError::EngineUnavailable),
            Err(e) => log::warn!("pipeline message rejected: {e}"),
            Ok(()) => {}
        }
    }
    let ingest = ingestor.counters();
    drop(ingestor);
    let (engine, report) = worker.join();
    let ground_truth = GroundTruth {
        lost: fleet.sensors.iter().map(|s| (s.descriptor.resource_id.clone(), s.lost.clone())).collect(),
        outliers: stream.take_injected(),
        expected_messages: fleet.expected_messages(),
    };
    Ok(PipelineReport {
        emitted,
        ingest,
        processed: report.processed,
        engine_errors: report.errors,
        too_old: report.too_old,
        stored: store.raw_appended(),
        footprints: report.footprints,
        final_footprint: engine.footprint(),
        latency: engine.latency_report(),
        ground_truth,
        wall_s: start.elapsed().as_secs_f64(),
    })
}
