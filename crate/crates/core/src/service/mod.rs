//! HTTP facade over the engine, versioned under `/api/v1`.
//!
//! Derived artifacts (codes, structural matrices, aggregate series and
//! embeddings) live in one byte-bounded single-flight cache keyed by dataset,
//! region, range and kind. CPU work runs on the blocking pool behind a
//! semaphore sized by the configured worker count.

pub mod cache;
pub mod colormap;
mod routes;

use std::collections::{BTreeMap, BTreeSet};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::aggregation::{AggregatedSeries, AggregationKind};
use crate::embedding::{project_2d, EmbeddedPoint};
use crate::engine::{range_structural, run_selection, CostInputs, SelectionResult};
use crate::error::{Error, Result};
use crate::features::{
    dataset_codes, structural_cost, DescriptorConfig, LatentCode, StructuralMatrix,
};
use crate::grid::{Dataset, FocusRange, Region};
use crate::selector::SelectionParams;
use crate::store::{ingest_csv_dir, ingest_stack, META_FILE};

pub use cache::{CacheKey, DerivedKind, Lookup, SingleFlightCache};
pub use routes::router;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_CACHE_BYTES: usize = 512 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub host: IpAddr,
    pub port: u16,
    pub data_dir: Option<PathBuf>,
    pub cache_bytes: usize,
    pub workers: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            data_dir: None,
            cache_bytes: DEFAULT_CACHE_BYTES,
            workers: default_workers(),
        }
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(4, |n| n.get())
}

/// A cached derived artifact.
#[derive(Debug, Clone)]
pub enum Artifact {
    Codes(Arc<Vec<LatentCode>>),
    Structural(Arc<StructuralMatrix>),
    Series(Arc<AggregatedSeries>),
    Embedding(Arc<Vec<EmbeddedPoint>>),
}

impl Artifact {
    pub fn size_bytes(&self) -> usize {
        match self {
            Artifact::Codes(c) => c.iter().map(|c| c.dims() * 8).sum(),
            Artifact::Structural(m) => m.size_bytes(),
            Artifact::Series(s) => s.size_bytes(),
            Artifact::Embedding(p) => p.len() * std::mem::size_of::<EmbeddedPoint>(),
        }
    }
}

/// Frame load state as shown on the timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadState {
    Salient,
    Loaded,
    Loading,
    Unloaded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameStatus {
    pub frame: usize,
    pub state: LoadState,
    pub pinned: bool,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectResponse {
    pub result: SelectionResult,
    pub preload_order: Vec<usize>,
    pub frame_status: Vec<FrameStatus>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrendKind {
    Structural,
    Max,
    Min,
    Avg,
}

impl std::str::FromStr for TrendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "structural" => Ok(TrendKind::Structural),
            "max" => Ok(TrendKind::Max),
            "min" => Ok(TrendKind::Min),
            "avg" | "mean" => Ok(TrendKind::Avg),
            other => Err(Error::constraint(
                format!("unknown trend kind `{other}`"),
                &["kind"],
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendResponse {
    pub kind: TrendKind,
    pub range: FocusRange,
    pub region: Option<Region>,
    #[serde(rename = "ref")]
    pub reference: Option<usize>,
    /// One value per frame of the range; missing values serialize as null.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResponse {
    pub method: String,
    pub range: FocusRange,
    pub region: Option<Region>,
    pub cap: usize,
    pub points: Vec<EmbeddedPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub id: String,
    pub variable: String,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub extent: [f64; 4],
    pub start: String,
    pub end: String,
    pub timestamps: Vec<String>,
    pub vmin: f64,
    pub vmax: f64,
}

impl DatasetDescriptor {
    pub fn of(ds: &Dataset) -> Self {
        let stamps: Vec<String> = ds
            .timestamps()
            .iter()
            .map(crate::store::format_timestamp)
            .collect();
        Self {
            id: ds.id().to_string(),
            variable: ds.variable().to_string(),
            width: ds.width(),
            height: ds.height(),
            frames: ds.len(),
            extent: ds.extent(),
            start: stamps.first().cloned().unwrap_or_default(),
            end: stamps.last().cloned().unwrap_or_default(),
            timestamps: stamps,
            vmin: ds.norm().vmin,
            vmax: ds.norm().vmax,
        }
    }
}

/// Salient steps first, then their neighbours at distance 1, 2, … in
/// breadth-first order, until every frame of `range` is listed once.
pub fn preload_order(steps: &[usize], range: FocusRange) -> Vec<usize> {
    let mut seen = BTreeSet::new();
    let mut order = Vec::with_capacity(range.len());
    for &s in steps {
        if range.contains(s) && seen.insert(s) {
            order.push(s);
        }
    }
    let mut d = 1;
    while order.len() < range.len() && !steps.is_empty() {
        for &s in steps {
            for t in [s.checked_sub(d), s.checked_add(d)].into_iter().flatten() {
                if range.contains(t) && seen.insert(t) {
                    order.push(t);
                }
            }
        }
        d += 1;
    }
    order
}

pub struct AppState {
    datasets: RwLock<BTreeMap<String, Arc<Dataset>>>,
    pub cache: SingleFlightCache<Artifact>,
    workers: Semaphore,
}

impl AppState {
    pub fn new(cache_bytes: usize, workers: usize) -> Self {
        Self {
            datasets: RwLock::new(BTreeMap::new()),
            cache: SingleFlightCache::new(cache_bytes),
            workers: Semaphore::new(workers.max(1)),
        }
    }

    pub fn from_config(config: &ServiceConfig) -> Result<Self> {
        let state = Self::new(config.cache_bytes, config.workers);
        if let Some(dir) = &config.data_dir {
            state.load_dir(dir)?;
        }
        Ok(state)
    }

    /// Registers every frame-stack or CSV directory directly under `root`.
    pub fn load_dir(&self, root: &Path) -> Result<usize> {
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        let mut count = 0;
        for dir in dirs {
            let has_csv = std::fs::read_dir(&dir)?.filter_map(|e| e.ok()).any(|e| {
                e.path()
                    .extension()
                    .is_some_and(|x| x.eq_ignore_ascii_case("csv"))
            });
            let dataset = if has_csv {
                ingest_csv_dir(&dir)?
            } else if dir.join(META_FILE).exists() {
                ingest_stack(&dir)?
            } else {
                continue;
            };
            self.register(dataset)?;
            count += 1;
        }
        Ok(count)
    }

    /// Adds a dataset and precomputes its whole-frame codes, full-range
    /// structural matrix and average series.
    pub fn register(&self, dataset: Dataset) -> Result<Arc<Dataset>> {
        let dataset = Arc::new(dataset);
        {
            let mut map = self.datasets.write();
            if map.contains_key(dataset.id()) {
                return Err(Error::constraint(
                    format!("dataset `{}` is already registered", dataset.id()),
                    &["id"],
                ));
            }
            map.insert(dataset.id().to_string(), Arc::clone(&dataset));
        }
        self.codes(&dataset, None)?;
        if dataset.len() >= 2 {
            let range = dataset.full_range()?;
            self.structural(&dataset, None, range)?;
            self.series(&dataset, None, range, AggregationKind::Avg)?;
        }
        tracing::info!(
            id = dataset.id(),
            frames = dataset.len(),
            "dataset registered"
        );
        Ok(dataset)
    }

    pub fn dataset(&self, id: &str) -> Result<Arc<Dataset>> {
        self.datasets
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("dataset `{id}`")))
    }

    pub fn datasets(&self) -> Vec<Arc<Dataset>> {
        self.datasets.read().values().cloned().collect()
    }

    /// Validates a region and maps the whole frame to `None`.
    pub fn canonical_region(ds: &Dataset, region: Option<Region>) -> Result<Option<Region>> {
        match region {
            Some(r) => {
                r.validate(ds.width(), ds.height())?;
                Ok(if r.is_full(ds.width(), ds.height()) {
                    None
                } else {
                    Some(r)
                })
            }
            None => Ok(None),
        }
    }

    pub fn codes(
        &self,
        ds: &Dataset,
        region: Option<Region>,
    ) -> Result<(Arc<Vec<LatentCode>>, Lookup)> {
        let key = CacheKey::new(ds.id(), region, None, DerivedKind::Codes);
        let (artifact, lookup) = self.cache.get_or_build(&key, Artifact::size_bytes, || {
            let codes = dataset_codes(ds, region.as_ref(), &DescriptorConfig::default())?;
            Ok(Artifact::Codes(Arc::new(codes)))
        })?;
        match &*artifact {
            Artifact::Codes(c) => Ok((Arc::clone(c), lookup)),
            _ => unreachable!("codes key holds codes"),
        }
    }

    pub fn structural(
        &self,
        ds: &Dataset,
        region: Option<Region>,
        range: FocusRange,
    ) -> Result<(Arc<StructuralMatrix>, Lookup)> {
        let key = CacheKey::new(ds.id(), region, Some(range), DerivedKind::StrucMatrix);
        let mut codes_lookup = Lookup::Hit;
        let (artifact, lookup) = self.cache.get_or_build(&key, Artifact::size_bytes, || {
            let (codes, l) = self.codes(ds, region)?;
            codes_lookup = l;
            Ok(Artifact::Structural(Arc::new(range_structural(
                ds, &codes, range,
            )?)))
        })?;
        match &*artifact {
            Artifact::Structural(m) => Ok((Arc::clone(m), worst(lookup, codes_lookup))),
            _ => unreachable!("structural key holds a matrix"),
        }
    }

    pub fn series(
        &self,
        ds: &Dataset,
        region: Option<Region>,
        range: FocusRange,
        kind: AggregationKind,
    ) -> Result<(Arc<AggregatedSeries>, Lookup)> {
        let key = CacheKey::new(ds.id(), region, Some(range), DerivedKind::AggSeries(kind));
        let (artifact, lookup) = self.cache.get_or_build(&key, Artifact::size_bytes, || {
            let series = AggregatedSeries::compute(ds, range, region.as_ref(), kind)?;
            Ok(Artifact::Series(Arc::new(series)))
        })?;
        match &*artifact {
            Artifact::Series(s) => Ok((Arc::clone(s), lookup)),
            _ => unreachable!("series key holds a series"),
        }
    }

    /// Projection of the range's codes with absolute frame indices.
    pub fn embedding(
        &self,
        ds: &Dataset,
        region: Option<Region>,
        range: FocusRange,
    ) -> Result<(Arc<Vec<EmbeddedPoint>>, Lookup)> {
        let key = CacheKey::new(ds.id(), region, Some(range), DerivedKind::Embedding);
        let (artifact, lookup) = self.cache.get_or_build(&key, Artifact::size_bytes, || {
            range.validate(ds.len())?;
            let (codes, _) = self.codes(ds, region)?;
            let mut points = project_2d(&codes[range.start..=range.end])?;
            for p in &mut points {
                p.frame += range.start;
            }
            Ok(Artifact::Embedding(Arc::new(points)))
        })?;
        match &*artifact {
            Artifact::Embedding(p) => Ok((Arc::clone(p), lookup)),
            _ => unreachable!("embedding key holds points"),
        }
    }

    pub fn select(
        &self,
        id: &str,
        mut params: SelectionParams,
    ) -> Result<(SelectResponse, Lookup)> {
        let ds = self.dataset(id)?;
        params.validate(ds.len())?;
        let region = Self::canonical_region(&ds, params.region)?;
        params.region = region;
        let (structural, l1) = self.structural(&ds, region, params.range)?;
        let (series, l2) = self.series(&ds, region, params.range, params.aggregation)?;
        let inputs = CostInputs {
            range: params.range,
            structural,
            series,
        };
        let result = run_selection(&ds, &inputs, &params)?;
        let preload = preload_order(&result.steps, params.range);
        let salient: BTreeSet<usize> = result.steps.iter().copied().collect();
        let frame_status = (params.range.start..=params.range.end)
            .map(|frame| FrameStatus {
                frame,
                state: if salient.contains(&frame) {
                    LoadState::Salient
                } else {
                    LoadState::Unloaded
                },
                pinned: params.pinned.contains(&frame),
                excluded: params.excluded.contains(&frame),
            })
            .collect();
        Ok((
            SelectResponse {
                result,
                preload_order: preload,
                frame_status,
            },
            worst(l1, l2),
        ))
    }

    pub fn trend(
        &self,
        id: &str,
        kind: TrendKind,
        range: Option<FocusRange>,
        region: Option<Region>,
        reference: Option<usize>,
    ) -> Result<TrendResponse> {
        let ds = self.dataset(id)?;
        let range = match range {
            Some(r) => {
                r.validate(ds.len())?;
                r
            }
            None => ds.full_range()?,
        };
        let region = Self::canonical_region(&ds, region)?;
        let values = match kind {
            TrendKind::Structural => {
                if let Some(t) = reference {
                    if t >= ds.len() {
                        return Err(Error::constraint(
                            format!("ref {t} is not a frame"),
                            &["ref"],
                        ));
                    }
                }
                let (codes, _) = self.codes(&ds, region)?;
                (range.start..=range.end)
                    .map(|i| {
                        let other = reference.unwrap_or(i.saturating_sub(1).max(range.start));
                        structural_cost(&codes[other], &codes[i])
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            TrendKind::Max | TrendKind::Min | TrendKind::Avg => {
                let agg = match kind {
                    TrendKind::Max => AggregationKind::Max,
                    TrendKind::Min => AggregationKind::Min,
                    _ => AggregationKind::Avg,
                };
                let (series, _) = self.series(&ds, region, range, agg)?;
                match reference {
                    None => series.normalized.clone(),
                    Some(t) if range.contains(t) => {
                        let anchor = series.normalized[t - range.start];
                        series
                            .normalized
                            .iter()
                            .map(|v| (v - anchor).abs())
                            .collect()
                    }
                    Some(t) => {
                        return Err(Error::constraint(
                            format!("ref {t} lies outside focus range {range}"),
                            &["ref"],
                        ))
                    }
                }
            }
        };
        Ok(TrendResponse {
            kind,
            range,
            region,
            reference,
            values,
        })
    }
}

fn worst(a: Lookup, b: Lookup) -> Lookup {
    if a == Lookup::Hit && b == Lookup::Hit {
        Lookup::Hit
    } else {
        Lookup::Miss
    }
}

/// Binds the configured address and serves until the process is stopped.
pub async fn serve(config: ServiceConfig, state: Arc<AppState>) -> Result<()> {
    let addr = SocketAddr::new(config.host, config.port);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    serve_on(listener, state).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, state: Arc<AppState>) -> Result<()> {
    axum::serve(listener, router(state)).await?;
    Ok(())
}
