//! Raw reading persistence, summary storage and replay.
//!
//! On-disk layout under the store root:
//!
//! ```text
//! raw/<resource>/<yyyy-mm-dd>.log           one JSON record per line, UTC day segments
//! quarantine/<yyyy-mm-dd>.log               readings of unregistered resources
//! summary/<resource>/<granularity>/<seg>.log  append-only summary log, last write wins
//! ```
//!
//! Summary segments are daily for five-minute summaries, monthly for hour and
//! day summaries, yearly for month summaries and a single file for years.

mod replay;

pub use replay::{ReplayError, ReplayReport, ReplaySpeed};

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{align, utc_date, Granularity, IntervalSummary, Reading, ResourceId};
use crate::query::Directory;
use crate::scalar::Scalar;

const RAW_FLUSH_BYTES: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage full")]
    StorageFull,
    #[error("i/o failure on {path}: {source}")]
    IoFailure { path: PathBuf, source: io::Error },
    #[error("unknown resource {0}")]
    UnknownResource(ResourceId),
    #[error("invalid range [{0}, {1})")]
    InvalidRange(i64, i64),
    #[error("corrupt record in {path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| {
        // ENOSPC
        if source.raw_os_error() == Some(28) {
            StoreError::StorageFull
        } else {
            StoreError::IoFailure { path: path.to_path_buf(), source }
        }
    }
}

/// Raw line format: the reading as it entered the system.
#[derive(Debug, Serialize, Deserialize)]
struct RawRecord<T> {
    device: String,
    sensor: String,
    value: T,
    ts: i64,
}

struct ResourceStore<T> {
    raw_dir: PathBuf,
    summary_dir: PathBuf,
    raw_day: Option<NaiveDate>,
    raw_buf: Vec<u8>,
    dirty: BTreeMap<(Granularity, i64), IntervalSummary<T>>,
}

struct Quarantine {
    day: Option<NaiveDate>,
    buf: Vec<u8>,
}

/// Raw log plus summary store rooted at one directory.
pub struct Store<T: Scalar> {
    root: PathBuf,
    directory: Arc<Directory>,
    resources: RwLock<HashMap<ResourceId, Arc<Mutex<ResourceStore<T>>>>>,
    quarantine: Mutex<Quarantine>,
    quarantined: AtomicU64,
    raw_appended: AtomicU64,
}

impl<T: Scalar> Store<T> {
    pub fn open(root: impl Into<PathBuf>, directory: Arc<Directory>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["raw", "summary", "quarantine"] {
            let p = root.join(sub);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        Ok(Store {
            root,
            directory,
            resources: RwLock::new(HashMap::new()),
            quarantine: Mutex::new(Quarantine { day: None, buf: Vec::new() }),
            quarantined: AtomicU64::new(0),
            raw_appended: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn directory(&self) -> &Arc<Directory> {
        &self.directory
    }

    fn resource(&self, id: &ResourceId) -> Arc<Mutex<ResourceStore<T>>> {
        if let Some(r) = self.resources.read().unwrap().get(id) {
            return r.clone();
        }
        let mut map = self.resources.write().unwrap();
        map.entry(id.clone())
            .or_insert_with(|| {
                Arc::new(Mutex::new(ResourceStore {
                    raw_dir: self.root.join("raw").join(id.as_str()),
                    summary_dir: self.root.join("summary").join(id.as_str()),
                    raw_day: None,
                    raw_buf: Vec::new(),
                    dirty: BTreeMap::new(),
                }))
            })
            .clone()
    }

    /// Append a reading verbatim. Unregistered resources go to quarantine.
    pub fn append_raw(&self, r: &Reading<T>) -> Result<(), StoreError> {
        if !self.directory.contains(&r.resource_id) {
            return self.quarantine(&r.device, &r.sensor, r.value, r.timestamp);
        }
        let day = utc_date(r.timestamp);
        let res = self.resource(&r.resource_id);
        let mut res = res.lock().unwrap();
        if res.raw_day != Some(day) {
            // segment roll
            res.flush()?;
            res.raw_day = Some(day);
        }
        encode_raw(&mut res.raw_buf, &r.device, &r.sensor, r.value, r.timestamp);
        self.raw_appended.fetch_add(1, Ordering::Relaxed);
        if res.raw_buf.len() >= RAW_FLUSH_BYTES {
            res.flush_raw()?;
        }
        Ok(())
    }

    /// Store a reading that could not be attributed to a registered resource.
    pub fn quarantine(&self, device: &str, sensor: &str, value: T, ts: i64) -> Result<(), StoreError> {
        let day = utc_date(ts.max(0));
        let mut q = self.quarantine.lock().unwrap();
        if q.day != Some(day) {
            self.flush_quarantine(&mut q)?;
            q.day = Some(day);
        }
        encode_raw(&mut q.buf, device, sensor, value, ts);
        self.quarantined.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    fn flush_quarantine(&self, q: &mut Quarantine) -> Result<(), StoreError> {
        if let (Some(day), false) = (q.day, q.buf.is_empty()) {
            let path = self.root.join("quarantine").join(format!("{day}.log"));
            append_file(&path, &q.buf)?;
            q.buf.clear();
        }
        Ok(())
    }

    pub fn quarantine_count(&self) -> u64 {
        self.quarantined.load(Ordering::Relaxed)
    }

    pub fn raw_appended(&self) -> u64 {
        self.raw_appended.load(Ordering::Relaxed)
    }

    /// Readings with `t0 <= timestamp < t1`, timestamp-ordered.
    pub fn get_raw(&self, resource: &ResourceId, t0: i64, t1: i64) -> Result<Vec<Reading<T>>, StoreError> {
        if t0 >= t1 {
            return Err(StoreError::InvalidRange(t0, t1));
        }
        if !self.directory.contains(resource) {
            return Err(StoreError::UnknownResource(resource.clone()));
        }
        let raw_dir = {
            let res = self.resource(resource);
            let mut res = res.lock().unwrap();
            res.flush_raw()?;
            res.raw_dir.clone()
        };
        let mut out = Vec::new();
        let (first, last) = (utc_date(t0.max(0)), utc_date((t1 - 1).max(0)));
        let mut day = first;
        while day <= last {
            read_raw_segment(&raw_dir.join(format!("{day}.log")), resource, &mut |r: Reading<T>| {
                if t0 <= r.timestamp && r.timestamp < t1 {
                    out.push(r);
                }
            })?;
            day = day.succ_opt().unwrap();
        }
        out.sort_by_key(|r| r.timestamp);
        Ok(out)
    }

    /// Write-through: summaries are visible to readers immediately and reach
    /// disk on the next segment roll or flush.
    pub fn put_summaries(&self, summaries: &[IntervalSummary<T>]) {
        let Some(first) = summaries.first() else { return };
        let res = self.resource(&first.resource_id);
        let mut res = res.lock().unwrap();
        for s in summaries {
            debug_assert_eq!(s.resource_id, first.resource_id);
            res.dirty.insert((s.interval.granularity, s.interval.start), s.clone());
        }
    }

    /// Stored summaries at `g` intersecting `[t0, t1)`, ordered by start.
    pub fn summaries(
        &self,
        resource: &ResourceId,
        g: Granularity,
        t0: i64,
        t1: i64,
    ) -> Result<Vec<IntervalSummary<T>>, StoreError> {
        if t0 >= t1 {
            return Err(StoreError::InvalidRange(t0, t1));
        }
        let res = self.resource(resource);
        let res = res.lock().unwrap();
        let mut found: BTreeMap<i64, IntervalSummary<T>> = BTreeMap::new();
        for seg in segments_for_range(g, t0, t1) {
            read_summary_segment(&res.summary_dir.join(g.as_str()).join(format!("{seg}.log")), &mut found)?;
        }
        let lo = align(t0.max(1), g).start;
        for ((_, start), s) in res.dirty.range((g, lo)..(g, t1)) {
            found.insert(*start, s.clone());
        }
        Ok(found
            .into_values()
            .filter(|s| s.interval.start < t1 && s.interval.end() > t0)
            .collect())
    }

    /// Flush every buffered raw record and dirty summary to disk.
    pub fn flush(&self) -> Result<(), StoreError> {
        let all: Vec<_> = self.resources.read().unwrap().values().cloned().collect();
        for r in all {
            r.lock().unwrap().flush()?;
        }
        let mut q = self.quarantine.lock().unwrap();
        self.flush_quarantine(&mut q)
    }

    /// Resource ids with a raw log directory, sorted.
    pub fn raw_resources(&self) -> Result<Vec<ResourceId>, StoreError> {
        list_dirs(&self.root.join("raw"))
    }

    /// Canonical text export of every stored summary: one JSON line per
    /// summary ordered by resource, granularity and start.
    pub fn export_summaries(&self) -> Result<String, StoreError> {
        self.flush()?;
        let mut out = String::new();
        for id in list_dirs(&self.root.join("summary"))? {
            for g in Granularity::ALL {
                let dir = self.root.join("summary").join(id.as_str()).join(g.as_str());
                let mut found = BTreeMap::new();
                let mut files: Vec<PathBuf> = match fs::read_dir(&dir) {
                    Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).collect(),
                    Err(e) if e.kind() == io::ErrorKind::NotFound => continue,
                    Err(e) => return Err(io_err(&dir)(e)),
                };
                files.sort();
                for f in files {
                    read_summary_segment::<T>(&f, &mut found)?;
                }
                for s in found.values() {
                    out.push_str(&serde_json::to_string(s).expect("summary serializes"));
                    out.push('\n');
                }
            }
        }
        Ok(out)
    }
}

impl<T: Scalar> Drop for Store<T> {
    fn drop(&mut self) {
        if let Err(e) = self.flush() {
            log::error!("store flush on shutdown failed: {e}");
        }
    }
}

impl<T: Scalar> ResourceStore<T> {
    fn flush_raw(&mut self) -> Result<(), StoreError> {
        if let (Some(day), false) = (self.raw_day, self.raw_buf.is_empty()) {
            fs::create_dir_all(&self.raw_dir).map_err(io_err(&self.raw_dir))?;
            append_file(&self.raw_dir.join(format!("{day}.log")), &self.raw_buf)?;
            self.raw_buf.clear();
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), StoreError> {
        self.flush_raw()?;
        if self.dirty.is_empty() {
            return Ok(());
        }
        let mut by_segment: BTreeMap<(Granularity, String), Vec<u8>> = BTreeMap::new();
        for ((g, start), s) in &self.dirty {
            let buf = by_segment.entry((*g, segment_name(*g, *start))).or_default();
            serde_json::to_writer(&mut *buf, s).expect("summary serializes");
            buf.push(b'\n');
        }
        for ((g, seg), buf) in by_segment {
            let dir = self.summary_dir.join(g.as_str());
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            append_file(&dir.join(format!("{seg}.log")), &buf)?;
        }
        self.dirty.clear();
        Ok(())
    }
}

fn encode_raw<T: Scalar>(buf: &mut Vec<u8>, device: &str, sensor: &str, value: T, ts: i64) {
    let rec = RawRecord { device: device.to_string(), sensor: sensor.to_string(), value, ts };
    serde_json::to_writer(&mut *buf, &rec).expect("raw record serializes");
    buf.push(b'\n');
}

fn append_file(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))
}

fn open_if_exists(path: &Path) -> Result<Option<BufReader<File>>, StoreError> {
    match File::open(path) {
        Ok(f) => Ok(Some(BufReader::new(f))),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path)(e)),
    }
}

fn read_raw_segment<T: Scalar>(
    path: &Path,
    resource: &ResourceId,
    f: &mut dyn FnMut(Reading<T>),
) -> Result<(), StoreError> {
    let Some(reader) = open_if_exists(path)? else { return Ok(()) };
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.is_empty() {
            continue;
        }
        let rec: RawRecord<T> = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        f(Reading {
            resource_id: resource.clone(),
            device: rec.device,
            sensor: rec.sensor,
            value: rec.value,
            timestamp: rec.ts,
        });
    }
    Ok(())
}

fn read_summary_segment<T: Scalar>(
    path: &Path,
    found: &mut BTreeMap<i64, IntervalSummary<T>>,
) -> Result<(), StoreError> {
    let Some(reader) = open_if_exists(path)? else { return Ok(()) };
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.is_empty() {
            continue;
        }
        let s: IntervalSummary<T> = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        found.insert(s.interval.start, s);
    }
    Ok(())
}

fn list_dirs(dir: &Path) -> Result<Vec<ResourceId>, StoreError> {
    let mut out = Vec::new();
    let rd = match fs::read_dir(dir) {
        Ok(rd) => rd,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(io_err(dir)(e)),
    };
    for e in rd {
        let e = e.map_err(io_err(dir))?;
        if e.path().is_dir() {
            if let Ok(id) = ResourceId::new(e.file_name().to_string_lossy()) {
                out.push(id);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn segment_name(g: Granularity, start: i64) -> String {
    let d = utc_date(start);
    match g {
        Granularity::FiveMin => d.to_string(),
        Granularity::Hour | Granularity::Day => format!("{:04}-{:02}", d.year(), d.month()),
        Granularity::Month => format!("{:04}", d.year()),
        Granularity::Year => "all".to_string(),
    }
}

/// Segment names that may hold a summary intersecting `[t0, t1)`.
fn segments_for_range(g: Granularity, t0: i64, t1: i64) -> Vec<String> {
    let first = align(t0.max(1), g).start;
    let last = t1 - 1;
    let mut out = Vec::new();
    match g {
        Granularity::Year => out.push("all".to_string()),
        Granularity::FiveMin => {
            let mut d = utc_date(first);
            while d <= utc_date(last) {
                out.push(d.to_string());
                d = d.succ_opt().unwrap();
            }
        }
        Granularity::Hour | Granularity::Day => {
            let (mut y, mut m) = (utc_date(first).year(), utc_date(first).month());
            let end = utc_date(last);
            while (y, m) <= (end.year(), end.month()) {
                out.push(format!("{y:04}-{m:02}"));
                (y, m) = if m == 12 { (y + 1, 1) } else { (y, m + 1) };
            }
        }
        Granularity::Month => {
            for y in utc_date(first).year()..=utc_date(last).year() {
                out.push(format!("{y:04}"));
            }
        }
    }
    out
}
