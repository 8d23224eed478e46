use std::sync::mpsc::Receiver;
use std::thread::JoinHandle;
use std::time::Instant;

use crate::model::Reading;
use crate::scalar::Scalar;

use super::{Engine, EngineError, Footprint};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkerReport {
    pub processed: u64,
    pub errors: u64,
    pub too_old: u64,
    /// `(processed, footprint)` samples taken every `sample_every` readings.
    pub footprints: Vec<(u64, Footprint)>,
    /// When the queue closed and the last reading was processed, before the final flush.
    pub drained_at: Option<Instant>,
}

/// Single engine worker draining the ingest queue on its own thread.
pub struct EngineWorker<T: Scalar> {
    handle: JoinHandle<(Engine<T>, WorkerReport)>,
}

impl<T: Scalar> EngineWorker<T> {
    /// Runs until every sender of `queue` is dropped.
    pub fn spawn(engine: Engine<T>, queue: Receiver<Reading<T>>) -> Self {
        Self::spawn_sampled(engine, queue, 0)
    }

    /// Like [`spawn`](Self::spawn), recording the aggregator footprint every
    /// `sample_every` readings (0 = never).
    pub fn spawn_sampled(mut engine: Engine<T>, queue: Receiver<Reading<T>>, sample_every: u64) -> Self {
        let handle = std::thread::Builder::new()
            .name("engine".into())
            .spawn(move || {
                let mut report = WorkerReport::default();
                for r in queue {
                    report.processed += 1;
                    match engine.submit(&r) {
                        Ok(_) => {}
                        Err(EngineError::TooOld { .. }) => report.too_old += 1,
                        Err(e) => {
                            report.errors += 1;
                            log::warn!("engine rejected reading for {}: {e}", r.resource_id);
                        }
                    }
                    if sample_every > 0 && report.processed % sample_every == 0 {
                        report.footprints.push((report.processed, engine.footprint()));
                    }
                }
                report.drained_at = Some(Instant::now());
                if let Err(e) = engine.flush() {
                    log::error!("engine flush failed: {e}");
                }
                (engine, report)
            })
            .expect("spawn engine thread");
        EngineWorker { handle }
    }

    pub fn join(self) -> (Engine<T>, WorkerReport) {
        self.handle.join().expect("engine thread panicked")
    }
}
