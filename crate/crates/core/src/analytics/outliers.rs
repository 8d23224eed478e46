use serde::Serialize;

use crate::scalar::Scalar;

use super::quartile::{fences, SortedWindow};
use super::{AnalyticsError, Series, DEFAULT_WINDOW_MS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Fence {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierFlag<T> {
    pub index: usize,
    pub ts: i64,
    pub original: T,
    pub replacement: T,
    pub fence: Fence,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierConfig {
    /// Trailing window span, ms.
    pub window_ms: i64,
    /// Fewer window points than this and the point is left alone.
    pub min_points: usize,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        OutlierConfig { window_ms: DEFAULT_WINDOW_MS, min_points: 4 }
    }
}

impl OutlierConfig {
    pub fn with_window(window_ms: i64) -> Self {
        OutlierConfig { window_ms, ..Default::default() }
    }
}

/// Flag values outside `[Q1 − 3·IQR, Q3 + 3·IQR]` of the trailing window
/// `[ts − W, ts)` and replace them by the in-fence window min (low) or max
/// (high). Windows are built from the original values, so one outlier does
/// not mask the next. Points within the first `W` of the series are never flagged.
pub fn detect_outliers<T: Scalar>(
    s: &Series<T>,
    cfg: OutlierConfig,
) -> Result<(Series<T>, Vec<OutlierFlag<T>>), AnalyticsError> {
    if cfg.window_ms <= 0 {
        return Err(AnalyticsError::BadWindow);
    }
    let first = s.points.first().ok_or(AnalyticsError::EmptySeries)?.ts;
    let mut clean = s.clone();
    let mut flags = Vec::new();
    let mut window = SortedWindow::new();
    let mut tail = 0usize;
    for (i, p) in s.points.iter().enumerate() {
        if i > 0 {
            window.insert(s.points[i - 1].value);
        }
        while tail < i && s.points[tail].ts < p.ts - cfg.window_ms {
            window.remove(s.points[tail].value);
            tail += 1;
        }
        if p.ts < first + cfg.window_ms || window.len() < cfg.min_points.max(1) {
            continue;
        }
        let f = fences(window.as_slice()).expect("non-empty window");
        let (fence, replacement) = if p.value < f.lower {
            (Fence::Lower, window.min_at_least(f.lower))
        } else if p.value > f.upper {
            (Fence::Upper, window.max_at_most(f.upper))
        } else {
            continue;
        };
        // Values between Q1 and Q3 are always inside the fences.
        let replacement = replacement.expect("in-fence window value");
        clean.points[i].value = replacement;
        clean.points[i].synthetic = true;
        flags.push(OutlierFlag { index: i, ts: p.ts, original: p.value, replacement, fence });
    }
    Ok((clean, flags))
}
