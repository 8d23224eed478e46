//! Directory, historical and real-time data access.

mod auth;
mod directory;
pub mod http;
mod realtime;

pub use auth::{Access, Decision, KeyTable};
pub use directory::Directory;
pub use realtime::{Dispatcher, Subscription, Update, DEFAULT_SUBSCRIBER_QUEUE};

use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::model::{Granularity, IntervalSummary, ResourceId, MS_PER_DAY};
use crate::scalar::Scalar;
use crate::store::{Store, StoreError};

/// Default maximum query span: five years.
pub const DEFAULT_MAX_SPAN_MS: i64 = 5 * 366 * MS_PER_DAY;

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("unknown resource {0}")]
    UnknownResource(ResourceId),
    #[error("resource {0} already registered")]
    Duplicate(String),
    #[error("range of {span_ms} ms exceeds the maximum of {max_ms} ms")]
    RangeTooLarge { span_ms: i64, max_ms: i64 },
    #[error("invalid range [{0}, {1})")]
    InvalidRange(i64, i64),
    #[error("invalid resource descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Avg,
    Min,
    Max,
    Count,
    Energy,
}

impl Field {
    pub const ALL: [Field; 5] = [Field::Avg, Field::Min, Field::Max, Field::Count, Field::Energy];

    pub fn name(self) -> &'static str {
        match self {
            Field::Avg => "avg",
            Field::Min => "min",
            Field::Max => "max",
            Field::Count => "count",
            Field::Energy => "energy",
        }
    }
}

impl FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Field::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown field {s:?}"))
    }
}

/// Parse `avg,min,max` style field lists.
pub fn parse_fields(s: &str) -> Result<Vec<Field>, String> {
    s.split(',').filter(|p| !p.is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRequest {
    pub resource_id: ResourceId,
    pub granularity: Granularity,
    pub from: i64,
    pub to: i64,
    pub fields: Vec<Field>,
}

impl QueryRequest {
    pub fn new(resource_id: ResourceId, granularity: Granularity, from: i64, to: i64) -> Self {
        QueryRequest { resource_id, granularity, from, to, fields: Field::ALL.to_vec() }
    }
}

#[derive(Debug, Clone)]
pub struct HistoricalResponse<T> {
    pub summaries: Vec<IntervalSummary<T>>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyRecord {
    pub resource_id: ResourceId,
    pub granularity: Granularity,
    pub from: i64,
    pub to: i64,
    pub records: usize,
    pub latency_ms: f64,
}

/// In-process Data API over a store.
pub struct QueryService<T: Scalar> {
    store: Arc<Store<T>>,
    directory: Arc<Directory>,
    dispatcher: Arc<Dispatcher<T>>,
    max_span_ms: i64,
    latency_log: Mutex<Vec<LatencyRecord>>,
}

impl<T: Scalar> QueryService<T> {
    pub fn new(store: Arc<Store<T>>, dispatcher: Arc<Dispatcher<T>>) -> Self {
        let directory = store.directory().clone();
        QueryService {
            store,
            directory,
            dispatcher,
            max_span_ms: DEFAULT_MAX_SPAN_MS,
            latency_log: Mutex::new(Vec::new()),
        }
    }

    pub fn with_max_span(mut self, ms: i64) -> Self {
        self.max_span_ms = ms;
        self
    }

    pub fn directory(&self) -> &Arc<Directory> {
        &self.directory
    }

    pub fn historical(&self, q: &QueryRequest) -> Result<HistoricalResponse<T>, QueryError> {
        let started = Instant::now();
        if q.from >= q.to {
            return Err(QueryError::InvalidRange(q.from, q.to));
        }
        let span_ms = q.to - q.from;
        if span_ms > self.max_span_ms {
            return Err(QueryError::RangeTooLarge { span_ms, max_ms: self.max_span_ms });
        }
        if !self.directory.contains(&q.resource_id) {
            return Err(QueryError::UnknownResource(q.resource_id.clone()));
        }
        let summaries = self.store.summaries(&q.resource_id, q.granularity, q.from, q.to)?;
        let latency_ms = started.elapsed().as_secs_f64() * 1e3;
        log::debug!(
            "historical {} {} [{}, {}) -> {} records in {latency_ms:.3} ms",
            q.resource_id,
            q.granularity,
            q.from,
            q.to,
            summaries.len()
        );
        self.latency_log.lock().unwrap().push(LatencyRecord {
            resource_id: q.resource_id.clone(),
            granularity: q.granularity,
            from: q.from,
            to: q.to,
            records: summaries.len(),
            latency_ms,
        });
        Ok(HistoricalResponse { summaries, latency_ms })
    }

    pub fn subscribe(&self, filter: Option<&[ResourceId]>) -> Result<Subscription<T>, QueryError> {
        self.dispatcher.subscribe(&self.directory, filter, DEFAULT_SUBSCRIBER_QUEUE)
    }

    /// Every historical call so far, in call order.
    pub fn latency_log(&self) -> Vec<LatencyRecord> {
        self.latency_log.lock().unwrap().clone()
    }
}

/// Project a summary onto the requested fields as `(name, value)` pairs.
pub fn project<T: Scalar>(s: &IntervalSummary<T>, fields: &[Field]) -> Vec<(&'static str, Option<f64>)> {
    fields
        .iter()
        .map(|f| {
            let v = match f {
                Field::Avg => Some(s.avg.as_f64()),
                Field::Min => Some(s.min.as_f64()),
                Field::Max => Some(s.max.as_f64()),
                Field::Count => Some(s.count as f64),
                Field::Energy => s.energy_wh.map(Scalar::as_f64),
            };
            (f.name(), v)
        })
        .collect()
}
