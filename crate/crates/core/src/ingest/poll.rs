use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::Reading;
use crate::scalar::Scalar;

use super::{BusMapper, IngestError};

/// Default polling period, seconds.
pub const DEFAULT_POLL_PERIOD: u64 = 300;

/// A record as returned by a vendor API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VendorRecord {
    pub device: String,
    pub sensor: String,
    pub value: f64,
    /// UTC epoch ms.
    pub ts: i64,
}

/// A polled external source and its progress cursor.
#[derive(Debug, Clone, PartialEq)]
pub struct PollSource {
    pub source_id: String,
    /// Seconds.
    pub poll_period: u64,
    /// Timestamp of the newest record already forwarded.
    pub cursor: i64,
}

impl PollSource {
    pub fn new(source_id: impl Into<String>, poll_period: u64, cursor: i64) -> Result<Self, IngestError> {
        if poll_period == 0 {
            return Err(IngestError::Config("poll_period must be positive".into()));
        }
        Ok(PollSource { source_id: source_id.into(), poll_period, cursor })
    }
}

/// One polling cycle: fetch, drop already-seen records, normalize, advance the cursor.
///
/// On fetch failure the cursor is left unchanged. Records that fail to
/// normalize are skipped and returned separately so the caller can quarantine them.
pub fn poll_cycle<T, F, E>(
    src: &mut PollSource,
    mapper: &BusMapper,
    fetch: F,
) -> Result<(Vec<Reading<T>>, Vec<(VendorRecord, IngestError)>), IngestError>
where
    T: Scalar,
    F: FnOnce(i64) -> Result<Vec<VendorRecord>, E>,
    E: std::fmt::Display,
{
    let records = fetch(src.cursor).map_err(|e| IngestError::SourceUnavailable(e.to_string()))?;
    let mut fresh: Vec<VendorRecord> = records.into_iter().filter(|r| r.ts > src.cursor).collect();
    fresh.sort_by_key(|r| r.ts);
    let mut out = Vec::with_capacity(fresh.len());
    let mut rejected = Vec::new();
    let mut newest = src.cursor;
    for rec in fresh {
        newest = newest.max(rec.ts);
        let msg = super::BusMessage::new(format!("{}/{}", rec.device, rec.sensor), format!("{}@{}", rec.value, rec.ts));
        match mapper.parse_bus_message::<T>(&msg, rec.ts) {
            Ok(r) => out.push(r),
            Err(e) => rejected.push((rec, e)),
        }
    }
    src.cursor = newest;
    Ok((out, rejected))
}

/// Polling source configuration for the CLI: a vendor export file of
/// JSON-lines [`VendorRecord`]s that is re-read every cycle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PollSourceConfig {
    pub source_id: String,
    pub path: PathBuf,
    #[serde(default = "default_period")]
    pub poll_period: u64,
    #[serde(default)]
    pub cursor: i64,
}

fn default_period() -> u64 {
    DEFAULT_POLL_PERIOD
}

impl PollSourceConfig {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|e| IngestError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| IngestError::Config(e.to_string()))
    }
}

/// Read every record newer than `cursor` from a JSON-lines export.
pub fn fetch_jsonl(path: &Path, cursor: i64) -> Result<Vec<VendorRecord>, std::io::Error> {
    let f = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: VendorRecord =
            serde_json::from_str(&line).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        if rec.ts > cursor {
            out.push(rec);
        }
    }
    Ok(out)
}
