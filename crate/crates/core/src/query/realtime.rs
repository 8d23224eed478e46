//! Real-time fan-out of engine updates to subscribers.

use std::collections::{HashSet, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::model::{IntervalSummary, Reading, ResourceId};
use crate::scalar::Scalar;

use super::{Directory, QueryError};

pub const DEFAULT_SUBSCRIBER_QUEUE: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Update<T> {
    Summary(IntervalSummary<T>),
    Raw(Reading<T>),
}

impl<T> Update<T> {
    pub fn resource_id(&self) -> &ResourceId {
        match self {
            Update::Summary(s) => &s.resource_id,
            Update::Raw(r) => &r.resource_id,
        }
    }
}

struct Shared<T> {
    filter: Option<HashSet<ResourceId>>,
    queue: Mutex<VecDeque<Update<T>>>,
    ready: Condvar,
    capacity: usize,
    dropped: AtomicU64,
    closed: AtomicBool,
}

impl<T: Clone> Shared<T> {
    fn wants(&self, id: &ResourceId) -> bool {
        self.filter.as_ref().map_or(true, |f| f.contains(id))
    }

    fn push(&self, u: Update<T>) {
        let mut q = self.queue.lock().unwrap();
        if q.len() >= self.capacity {
            q.pop_front();
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        q.push_back(u);
        self.ready.notify_one();
    }
}

/// Receiving end of a subscription. Dropping it unsubscribes.
pub struct Subscription<T> {
    shared: Arc<Shared<T>>,
}

impl<T: Clone> Subscription<T> {
    pub fn try_recv(&self) -> Option<Update<T>> {
        self.shared.queue.lock().unwrap().pop_front()
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<Update<T>> {
        let deadline = Instant::now() + timeout;
        let mut q = self.shared.queue.lock().unwrap();
        loop {
            if let Some(u) = q.pop_front() {
                return Some(u);
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            q = self.shared.ready.wait_timeout(q, deadline - now).unwrap().0;
        }
    }

    pub fn drain(&self) -> Vec<Update<T>> {
        self.shared.queue.lock().unwrap().drain(..).collect()
    }

    /// Updates discarded because the queue was full.
    pub fn dropped(&self) -> u64 {
        self.shared.dropped.load(Ordering::Relaxed)
    }

    pub fn pending(&self) -> usize {
        self.shared.queue.lock().unwrap().len()
    }
}

impl<T> Drop for Subscription<T> {
    fn drop(&mut self) {
        self.shared.closed.store(true, Ordering::Relaxed);
    }
}

/// Single dispatcher: updates are pushed synchronously in publish order, so
/// each subscriber sees per-resource order preserved.
pub struct Dispatcher<T> {
    subs: RwLock<Vec<Arc<Shared<T>>>>,
    raw_passthrough: bool,
}

impl<T: Scalar> Dispatcher<T> {
    pub fn new() -> Self {
        Dispatcher { subs: RwLock::new(Vec::new()), raw_passthrough: false }
    }

    /// Also deliver raw readings, not only summaries.
    pub fn with_raw_passthrough(mut self, on: bool) -> Self {
        self.raw_passthrough = on;
        self
    }

    pub fn raw_passthrough(&self) -> bool {
        self.raw_passthrough
    }

    /// `filter = None` subscribes to every resource.
    pub fn subscribe(
        &self,
        directory: &Directory,
        filter: Option<&[ResourceId]>,
        capacity: usize,
    ) -> Result<Subscription<T>, QueryError> {
        let filter = match filter {
            None => None,
            Some(ids) => {
                if let Some(bad) = ids.iter().find(|id| !directory.contains(id)) {
                    return Err(QueryError::UnknownResource(bad.clone()));
                }
                Some(ids.iter().cloned().collect())
            }
        };
        let shared = Arc::new(Shared {
            filter,
            queue: Mutex::new(VecDeque::new()),
            ready: Condvar::new(),
            capacity: capacity.max(1),
            dropped: AtomicU64::new(0),
            closed: AtomicBool::new(false),
        });
        self.subs.write().unwrap().push(shared.clone());
        Ok(Subscription { shared })
    }

    pub fn subscriber_count(&self) -> usize {
        self.subs.read().unwrap().iter().filter(|s| !s.closed.load(Ordering::Relaxed)).count()
    }

    pub fn publish(&self, summaries: &[IntervalSummary<T>]) {
        self.fan_out(summaries.iter().map(|s| Update::Summary(s.clone())));
    }

    pub fn publish_reading(&self, r: &Reading<T>) {
        if self.raw_passthrough {
            self.fan_out(std::iter::once(Update::Raw(r.clone())));
        }
    }

    fn fan_out(&self, updates: impl Iterator<Item = Update<T>>) {
        let mut prune = false;
        {
            let subs = self.subs.read().unwrap();
            if subs.is_empty() {
                return;
            }
            for u in updates {
                for s in subs.iter() {
                    if s.closed.load(Ordering::Relaxed) {
                        prune = true;
                    } else if s.wants(u.resource_id()) {
                        s.push(u.clone());
                    }
                }
            }
        }
        if prune {
            self.subs.write().unwrap().retain(|s| !s.closed.load(Ordering::Relaxed));
        }
    }
}

impl<T: Scalar> Default for Dispatcher<T> {
    fn default() -> Self {
        Self::new()
    }
}
