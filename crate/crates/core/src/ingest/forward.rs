use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TrySendError};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::model::Reading;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ack;

#[derive(Debug, Error)]
pub enum ForwardError<T> {
    /// Queue full; the reading is handed back for a retry.
    #[error("engine queue full")]
    Backpressure(Reading<T>),
    #[error("engine queue closed")]
    Disconnected,
}

/// Bounded exponential backoff.
#[derive(Debug, Clone, Copy)]
pub struct Backoff {
    pub initial: Duration,
    pub max: Duration,
    pub attempts: u32,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff { initial: Duration::from_micros(200), max: Duration::from_millis(50), attempts: 12 }
    }
}

/// Producer handle onto the engine submission queue. Cloneable; safe for
/// concurrent producers, FIFO per producer.
pub struct Forwarder<T> {
    tx: SyncSender<Reading<T>>,
    backpressure: Arc<AtomicU64>,
}

impl<T> Clone for Forwarder<T> {
    fn clone(&self) -> Self {
        Forwarder { tx: self.tx.clone(), backpressure: self.backpressure.clone() }
    }
}

/// Bounded engine queue: the forwarder side and the engine's receiver.
pub fn engine_queue<T>(capacity: usize) -> (Forwarder<T>, Receiver<Reading<T>>) {
    let (tx, rx) = sync_channel(capacity);
    (Forwarder { tx, backpressure: Arc::new(AtomicU64::new(0)) }, rx)
}

impl<T> Forwarder<T> {
    pub fn forward(&self, r: Reading<T>) -> Result<Ack, ForwardError<T>> {
        match self.tx.try_send(r) {
            Ok(()) => Ok(Ack),
            Err(TrySendError::Full(r)) => {
                self.backpressure.fetch_add(1, Ordering::Relaxed);
                Err(ForwardError::Backpressure(r))
            }
            Err(TrySendError::Disconnected(_)) => Err(ForwardError::Disconnected),
        }
    }

    /// Retry on backpressure with bounded exponential backoff.
    pub fn forward_with_retry(&self, mut r: Reading<T>, backoff: Backoff) -> Result<Ack, ForwardError<T>> {
        let mut wait = backoff.initial;
        for attempt in 0..=backoff.attempts {
            match self.forward(r) {
                Err(ForwardError::Backpressure(back)) if attempt < backoff.attempts => {
                    r = back;
                    std::thread::sleep(wait);
                    wait = (wait * 2).min(backoff.max);
                }
                other => return other,
            }
        }
        unreachable!("loop returns on the last attempt")
    }

    /// Blocking send; used by replay and batch loaders.
    pub fn forward_blocking(&self, r: Reading<T>) -> Result<Ack, ForwardError<T>> {
        self.tx.send(r).map(|_| Ack).map_err(|_| ForwardError::Disconnected)
    }

    /// Number of times the queue was found full.
    pub fn backpressure_events(&self) -> u64 {
        self.backpressure.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ResourceId;

    fn r(ts: i64) -> Reading<f64> {
        Reading { resource_id: ResourceId::new("r").unwrap(), device: "d".into(), sensor: "s".into(), value: 1.0, timestamp: ts }
    }

    #[test]
    fn ack_then_backpressure() {
        let (fwd, rx) = engine_queue::<f64>(1);
        assert!(fwd.forward(r(1)).is_ok());
        match fwd.forward(r(2)) {
            Err(ForwardError::Backpressure(back)) => assert_eq!(back.timestamp, 2),
            other => panic!("{other:?}"),
        }
        assert_eq!(fwd.backpressure_events(), 1);
        assert_eq!(rx.recv().unwrap().timestamp, 1);
        assert!(fwd.forward(r(2)).is_ok());
    }

    #[test]
    fn retry_gives_up_after_bounded_attempts() {
        let (fwd, _rx) = engine_queue::<f64>(1);
        fwd.forward(r(1)).unwrap();
        let b = Backoff { initial: Duration::from_micros(10), max: Duration::from_micros(40), attempts: 3 };
        assert!(matches!(fwd.forward_with_retry(r(2), b), Err(ForwardError::Backpressure(_))));
        assert_eq!(fwd.backpressure_events(), 4);
    }

    #[test]
    fn order_preserved() {
        let (fwd, rx) = engine_queue::<f64>(16);
        for i in 1..=10 {
            fwd.forward(r(i)).unwrap();
        }
        drop(fwd);
        assert_eq!(rx.iter().map(|r| r.timestamp).collect::<Vec<_>>(), (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn closed_queue() {
        let (fwd, rx) = engine_queue::<f64>(1);
        drop(rx);
        assert!(matches!(fwd.forward(r(1)), Err(ForwardError::Disconnected)));
    }
}
