//! School-building sensing platform: wire-compatible ingestion, a cascaded
//! tumbling-window aggregation engine, raw storage with replay, historical
//! and real-time queries, data-quality and thermal-comfort analytics, and a
//! synthetic fleet for load and ground-truth testing.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, with `*32` variants for `f32`.

pub mod analytics;
pub mod engine;
pub mod fleetsim;
pub mod ingest;
pub mod model;
pub mod query;
pub mod scalar;
pub mod store;

pub use model::{
    align, AggregationType, Granularity, IntervalKey, ResourceDescriptor, ResourceId, ResourceKind, Site,
    Topology,
};
pub use scalar::Scalar;

pub type Reading = model::Reading<f64>;
pub type IntervalSummary = model::IntervalSummary<f64>;
pub type Engine = engine::Engine<f64>;
pub type Store = store::Store<f64>;
pub type QueryService = query::QueryService<f64>;
pub type Dispatcher = query::Dispatcher<f64>;
pub type Series = analytics::Series<f64>;

pub type Reading32 = model::Reading<f32>;
pub type IntervalSummary32 = model::IntervalSummary<f32>;
pub type Engine32 = engine::Engine<f32>;
pub type Store32 = store::Store<f32>;
pub type Series32 = analytics::Series<f32>;
