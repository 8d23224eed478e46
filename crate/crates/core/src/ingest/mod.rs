//! API mappers: translate external wire formats into readings and forward
//! them to the engine queue.

mod bus;
mod forward;
mod poll;
mod socket;

pub use bus::{format_bus_message, parse_payload, split_topic, BusMapper, BusMessage};
pub use forward::{engine_queue, Ack, Backoff, ForwardError, Forwarder};
pub use poll::{fetch_jsonl, poll_cycle, PollSource, PollSourceConfig, VendorRecord, DEFAULT_POLL_PERIOD};
pub use socket::{IngestCounters, LineIngestor, LineListener};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("malformed topic {0:?}: expected <device>/<sensor>")]
    MalformedTopic(String),
    #[error("malformed payload {0:?}")]
    MalformedPayload(String),
    #[error("unknown resource {device}/{sensor}")]
    UnknownResource { device: String, sensor: String },
    #[error("malformed line {0:?}: expected <topic>\\t<payload>")]
    MalformedLine(String),
    #[error("source unavailable: {0}")]
    SourceUnavailable(String),
    #[error("engine queue full")]
    Backpressure,
    #[error("engine unavailable")]
    EngineUnavailable,
    #[error("config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

/// Wall clock, UTC epoch ms.
pub fn now_ms() -> i64 {
    chrono::Utc::now().timestamp_millis()
}
