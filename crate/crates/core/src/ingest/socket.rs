use std::io::{BufRead, BufReader, Read};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::Serialize;

use crate::scalar::Scalar;
use crate::store::Store;

use super::{now_ms, Backoff, BusMapper, BusMessage, ForwardError, Forwarder, IngestError};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestCounters {
    pub accepted: u64,
    pub malformed: u64,
    pub unknown: u64,
    pub dropped: u64,
}

#[derive(Default)]
struct Counters {
    accepted: AtomicU64,
    malformed: AtomicU64,
    unknown: AtomicU64,
    dropped: AtomicU64,
}

/// Line-oriented mapper front end: `topic<TAB>payload` per line.
pub struct LineIngestor<T: Scalar> {
    mapper: Arc<BusMapper>,
    forwarder: Forwarder<T>,
    quarantine: Option<Arc<Store<T>>>,
    backoff: Backoff,
    blocking: bool,
    counters: Counters,
}

impl<T: Scalar> LineIngestor<T> {
    pub fn new(mapper: Arc<BusMapper>, forwarder: Forwarder<T>) -> Self {
        LineIngestor { mapper, forwarder, quarantine: None, backoff: Backoff::default(), blocking: false, counters: Counters::default() }
    }

    /// Store readings of unregistered resources in the quarantine segment.
    pub fn with_quarantine(mut self, store: Arc<Store<T>>) -> Self {
        self.quarantine = Some(store);
        self
    }

    pub fn with_backoff(mut self, b: Backoff) -> Self {
        self.backoff = b;
        self
    }

    /// Wait for queue space instead of dropping after the backoff budget.
    /// For batch sources (files, simulation) where the producer can be slowed.
    pub fn with_blocking(mut self, on: bool) -> Self {
        self.blocking = on;
        self
    }

    pub fn handle_message(&self, msg: &BusMessage, now: i64) -> Result<(), IngestError> {
        match self.mapper.parse_bus_message::<T>(msg, now) {
            Ok(r) => match if self.blocking {
                self.forwarder.forward_blocking(r)
            } else {
                self.forwarder.forward_with_retry(r, self.backoff)
            } {
                Ok(_) => {
                    self.counters.accepted.fetch_add(1, Ordering::Relaxed);
                    Ok(())
                }
                Err(ForwardError::Backpressure(_)) => {
                    self.counters.dropped.fetch_add(1, Ordering::Relaxed);
                    Err(IngestError::Backpressure)
                }
                Err(ForwardError::Disconnected) => Err(IngestError::EngineUnavailable),
            },
            Err(e @ IngestError::UnknownResource { .. }) => {
                self.counters.unknown.fetch_add(1, Ordering::Relaxed);
                if let (Some(store), Ok((device, sensor)), Ok((value, ts))) = (
                    &self.quarantine,
                    super::split_topic(&msg.topic),
                    super::parse_payload::<T>(&msg.payload),
                ) {
                    if let Err(qe) = store.quarantine(device, sensor, value, ts.unwrap_or(now)) {
                        log::error!("quarantine write failed: {qe}");
                    }
                }
                Err(e)
            }
            Err(e) => {
                self.counters.malformed.fetch_add(1, Ordering::Relaxed);
                Err(e)
            }
        }
    }

    pub fn handle_line(&self, line: &str, now: i64) -> Result<(), IngestError> {
        if line.trim().is_empty() {
            return Ok(());
        }
        match BusMessage::from_line(line) {
            Ok(m) => self.handle_message(&m, now),
            Err(e) => {
                self.counters.malformed.fetch_add(1, Ordering::Relaxed);
                Err(e)
            }
        }
    }

    /// Feed every line of `input`. Stops early only if the engine goes away.
    pub fn consume<R: Read>(&self, input: R) -> Result<(), IngestError> {
        for line in BufReader::new(input).lines() {
            let line = line.map_err(|e| IngestError::Io(e.to_string()))?;
            match self.handle_line(&line, now_ms()) {
                Err(IngestError::EngineUnavailable) => return Err(IngestError::EngineUnavailable),
                Err(e) => log::debug!("skipped line: {e}"),
                Ok(()) => {}
            }
        }
        Ok(())
    }

    pub fn counters(&self) -> IngestCounters {
        IngestCounters {
            accepted: self.counters.accepted.load(Ordering::Relaxed),
            malformed: self.counters.malformed.load(Ordering::Relaxed),
            unknown: self.counters.unknown.load(Ordering::Relaxed),
            dropped: self.counters.dropped.load(Ordering::Relaxed),
        }
    }
}

/// TCP listener accepting bus lines; one thread per connection.
pub struct LineListener {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl LineListener {
    pub fn bind<T: Scalar>(addr: &str, ingestor: Arc<LineIngestor<T>>) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = std::thread::Builder::new().name("ingest-listener".into()).spawn(move || {
            let mut conns = Vec::new();
            for stream in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                match stream {
                    Ok(s) => {
                        let ing = ingestor.clone();
                        conns.push(std::thread::spawn(move || {
                            if let Err(e) = ing.consume(s) {
                                log::warn!("connection closed: {e}");
                            }
                        }));
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                }
            }
            for c in conns {
                let _ = c.join();
            }
        })?;
        Ok(LineListener { addr, stop, handle: Some(handle) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stop accepting and wait for open connections to finish.
    pub fn stop(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }

    /// Block until the listener thread exits.
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
