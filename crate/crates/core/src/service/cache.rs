//! Byte-bounded LRU cache with single-flight builds.
//!
//! Concurrent misses on one key run the builder once; the other callers block
//! until it finishes and share its result. Builders run without the cache
//! lock held, so distinct keys build in parallel.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Condvar, Mutex};
use serde::Serialize;

use crate::aggregation::AggregationKind;
use crate::error::{Error, Result};
use crate::grid::{FocusRange, Region};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivedKind {
    Codes,
    StrucMatrix,
    AggSeries(AggregationKind),
    Embedding,
}

impl fmt::Display for DerivedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DerivedKind::Codes => f.write_str("codes"),
            DerivedKind::StrucMatrix => f.write_str("struc-matrix"),
            DerivedKind::AggSeries(k) => write!(f, "agg-series:{k}"),
            DerivedKind::Embedding => f.write_str("embedding"),
        }
    }
}

/// Identity of a derived artifact. `region: None` means the whole frame and
/// `range: None` the whole dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub dataset: String,
    pub region: Option<Region>,
    pub range: Option<FocusRange>,
    pub kind: DerivedKind,
}

impl CacheKey {
    pub fn new(
        dataset: impl Into<String>,
        region: Option<Region>,
        range: Option<FocusRange>,
        kind: DerivedKind,
    ) -> Self {
        Self {
            dataset: dataset.into(),
            region,
            range,
            kind,
        }
    }

    /// Canonical serialization; equal keys produce equal bytes and vice versa.
    pub fn canonical(&self) -> String {
        let region = self
            .region
            .map_or_else(|| "whole".to_string(), |r| r.to_string());
        let range = self
            .range
            .map_or_else(|| "all".to_string(), |r| r.to_string());
        let id = serde_json::to_string(&self.dataset).expect("strings serialize");
        format!("{id}|{region}|{range}|{}", self.kind)
    }
}

type Shared<V> = std::result::Result<Arc<V>, Error>;

struct Flight<V> {
    outcome: Mutex<Option<Shared<V>>>,
    done: Condvar,
}

enum Slot<V> {
    Ready {
        value: Arc<V>,
        bytes: usize,
        used: u64,
    },
    Building(Arc<Flight<V>>),
}

struct Inner<V> {
    slots: HashMap<String, Slot<V>>,
    bytes: usize,
    tick: u64,
    builds: HashMap<String, u64>,
}

pub struct SingleFlightCache<V> {
    inner: Mutex<Inner<V>>,
    capacity: usize,
    builds: AtomicU64,
}

/// Whether a lookup was served from a finished entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    Hit,
    Miss,
}

impl<V> SingleFlightCache<V> {
    pub fn new(capacity_bytes: usize) -> Self {
        Self {
            inner: Mutex::new(Inner {
                slots: HashMap::new(),
                bytes: 0,
                tick: 0,
                builds: HashMap::new(),
            }),
            capacity: capacity_bytes,
            builds: AtomicU64::new(0),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Bytes held by finished entries.
    pub fn bytes(&self) -> usize {
        self.inner.lock().bytes
    }

    pub fn len(&self) -> usize {
        self.inner
            .lock()
            .slots
            .values()
            .filter(|s| matches!(s, Slot::Ready { .. }))
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total builder invocations.
    pub fn builds(&self) -> u64 {
        self.builds.load(Ordering::SeqCst)
    }

    /// Builder invocations for one key.
    pub fn builds_for(&self, key: &CacheKey) -> u64 {
        self.inner
            .lock()
            .builds
            .get(&key.canonical())
            .copied()
            .unwrap_or(0)
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        matches!(
            self.inner.lock().slots.get(&key.canonical()),
            Some(Slot::Ready { .. })
        )
    }

    /// Returns the cached value or builds it once for all concurrent callers.
    /// Failed builds are not cached.
    pub fn get_or_build(
        &self,
        key: &CacheKey,
        size: impl FnOnce(&V) -> usize,
        build: impl FnOnce() -> Result<V>,
    ) -> Result<(Arc<V>, Lookup)> {
        let canonical = key.canonical();
        let flight = {
            let mut inner = self.inner.lock();
            inner.tick += 1;
            let tick = inner.tick;
            match inner.slots.get_mut(&canonical) {
                Some(Slot::Ready { value, used, .. }) => {
                    *used = tick;
                    return Ok((Arc::clone(value), Lookup::Hit));
                }
                Some(Slot::Building(flight)) => Some(Arc::clone(flight)),
                None => {
                    let flight = Arc::new(Flight {
                        outcome: Mutex::new(None),
                        done: Condvar::new(),
                    });
                    inner
                        .slots
                        .insert(canonical.clone(), Slot::Building(Arc::clone(&flight)));
                    *inner.builds.entry(canonical.clone()).or_default() += 1;
                    self.builds.fetch_add(1, Ordering::SeqCst);
                    drop(inner);
                    return self.finish(canonical, flight, size, build);
                }
            }
        };
        let flight = flight.expect("waiting on an in-flight build");
        let mut outcome = flight.outcome.lock();
        while outcome.is_none() {
            flight.done.wait(&mut outcome);
        }
        match outcome.as_ref().expect("outcome set") {
            Ok(v) => Ok((Arc::clone(v), Lookup::Miss)),
            Err(e) => Err(e.clone()),
        }
    }

    fn finish(
        &self,
        canonical: String,
        flight: Arc<Flight<V>>,
        size: impl FnOnce(&V) -> usize,
        build: impl FnOnce() -> Result<V>,
    ) -> Result<(Arc<V>, Lookup)> {
        let built = std::panic::catch_unwind(std::panic::AssertUnwindSafe(build))
            .unwrap_or_else(|_| Err(Error::Format("artifact builder panicked".into())))
            .map(Arc::new);
        {
            let mut inner = self.inner.lock();
            match &built {
                Ok(value) => {
                    let bytes = size(value);
                    inner.tick += 1;
                    let used = inner.tick;
                    inner.slots.insert(
                        canonical.clone(),
                        Slot::Ready {
                            value: Arc::clone(value),
                            bytes,
                            used,
                        },
                    );
                    inner.bytes += bytes;
                    self.evict(&mut inner, &canonical);
                }
                Err(_) => {
                    inner.slots.remove(&canonical);
                }
            }
        }
        *flight.outcome.lock() = Some(built.clone());
        flight.done.notify_all();
        built.map(|v| (v, Lookup::Miss))
    }

    /// Drops least recently used entries until within capacity. An entry
    /// larger than the whole capacity is not retained.
    fn evict(&self, inner: &mut Inner<V>, fresh: &str) {
        if let Some(Slot::Ready { bytes, .. }) = inner.slots.get(fresh) {
            if *bytes > self.capacity {
                let bytes = *bytes;
                inner.slots.remove(fresh);
                inner.bytes -= bytes;
                return;
            }
        }
        while inner.bytes > self.capacity {
            let victim = inner
                .slots
                .iter()
                .filter_map(|(k, s)| match s {
                    Slot::Ready { used, .. } if k != fresh => Some((*used, k.clone())),
                    _ => None,
                })
                .min()
                .map(|(_, k)| k);
            let Some(victim) = victim else { break };
            if let Some(Slot::Ready { bytes, .. }) = inner.slots.remove(&victim) {
                inner.bytes -= bytes;
            }
        }
    }
}
