use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::model::{utc_date, Reading};
use crate::scalar::Scalar;

use super::{read_raw_segment, Store, StoreError};

/// Replay pacing: a multiplier on recorded time, or as fast as possible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReplaySpeed {
    Factor(f64),
    Max,
}

impl FromStr for ReplaySpeed {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" | "inf" | "∞" => Ok(ReplaySpeed::Max),
            x => match x.trim_end_matches('x').parse::<f64>() {
                Ok(f) if f > 0.0 && f.is_finite() => Ok(ReplaySpeed::Factor(f)),
                Ok(f) if f == f64::INFINITY => Ok(ReplaySpeed::Max),
                _ => Err(format!("speed must be a positive number or 'max', got {s:?}")),
            },
        }
    }
}

impl fmt::Display for ReplaySpeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplaySpeed::Factor(x) => write!(f, "{x}x"),
            ReplaySpeed::Max => f.write_str("max"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub count: u64,
    pub wall: Duration,
    pub first_ts: Option<i64>,
    pub last_ts: Option<i64>,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("sink failed after {position} readings at ts {timestamp}: {message}")]
    SinkFailure { position: u64, timestamp: i64, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("invalid speed {0}")]
    InvalidSpeed(f64),
}

impl<T: Scalar> Store<T> {
    /// Deliver every stored reading in `[t0, t1)` to `sink` in timestamp order.
    ///
    /// Ties are broken by resource id, then by log order. Gaps between
    /// consecutive readings are scaled by `1 / speed`. Memory use is bounded
    /// by one UTC day of raw data.
    pub fn replay<E: fmt::Display>(
        &self,
        t0: i64,
        t1: i64,
        speed: ReplaySpeed,
        sink: &mut dyn FnMut(&Reading<T>) -> Result<(), E>,
    ) -> Result<ReplayReport, ReplayError> {
        if t0 >= t1 {
            return Err(StoreError::InvalidRange(t0, t1).into());
        }
        if let ReplaySpeed::Factor(f) = speed {
            if !(f > 0.0) {
                return Err(ReplayError::InvalidSpeed(f));
            }
        }
        self.flush()?;
        let resources = self.raw_resources()?;
        let started = Instant::now();
        let mut report = ReplayReport { count: 0, wall: Duration::ZERO, first_ts: None, last_ts: None };
        let mut day = utc_date(t0.max(0));
        let last = utc_date((t1 - 1).max(0));
        while day <= last {
            let mut batch = Vec::new();
            for id in &resources {
                let path = self.root.join("raw").join(id.as_str()).join(format!("{day}.log"));
                let mut seg = Vec::new();
                read_raw_segment(&path, id, &mut |r: Reading<T>| {
                    if t0 <= r.timestamp && r.timestamp < t1 {
                        seg.push(r);
                    }
                })?;
                seg.sort_by_key(|r| r.timestamp);
                batch.extend(seg);
            }
            // stable: resource order then log order survive equal timestamps
            batch.sort_by_key(|r| r.timestamp);
            for r in &batch {
                let first = *report.first_ts.get_or_insert(r.timestamp);
                if let ReplaySpeed::Factor(f) = speed {
                    let due = Duration::from_secs_f64((r.timestamp - first) as f64 / 1000.0 / f);
                    let elapsed = started.elapsed();
                    if due > elapsed {
                        std::thread::sleep(due - elapsed);
                    }
                }
                sink(r).map_err(|e| ReplayError::SinkFailure {
                    position: report.count,
                    timestamp: r.timestamp,
                    message: e.to_string(),
                })?;
                report.count += 1;
                report.last_ts = Some(r.timestamp);
            }
            day = day.succ_opt().unwrap();
        }
        report.wall = started.elapsed();
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speed_parsing() {
        assert_eq!("max".parse::<ReplaySpeed>().unwrap(), ReplaySpeed::Max);
        assert_eq!("10x".parse::<ReplaySpeed>().unwrap(), ReplaySpeed::Factor(10.0));
        assert_eq!("2.5".parse::<ReplaySpeed>().unwrap(), ReplaySpeed::Factor(2.5));
        assert!("0".parse::<ReplaySpeed>().is_err());
        assert!("-1".parse::<ReplaySpeed>().is_err());
    }
}
