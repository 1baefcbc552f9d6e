use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::colormap::Colormap;
use super::{AppState, DatasetDescriptor, EmbeddingResponse, Lookup, TrendKind};
use crate::aggregation::AggregationKind;
use crate::embedding::{sample_for_display, DISPLAY_CAP};
use crate::error::{Error, Result};
use crate::grid::{crop, FocusRange, GridFrame, Region};
use crate::selector::{SelectionParams, DEFAULT_GAMMA, DEFAULT_SIGMA};
use crate::store::encode_f32_le;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/datasets", get(list_datasets))
        .route("/api/v1/datasets/{id}", get(describe_dataset))
        .route("/api/v1/datasets/{id}/frames/{t}", get(frame))
        .route("/api/v1/datasets/{id}/select", post(select))
        .route("/api/v1/datasets/{id}/trend", get(trend))
        .route("/api/v1/datasets/{id}/embedding", get(embedding))
        .with_state(state)
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    code: &'static str,
    message: String,
    field: Option<String>,
    fields: Vec<String>,
}

pub(super) struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Constraint { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        let fields = self.0.fields().to_vec();
        let body = ErrorBody {
            code: self.0.code(),
            message: self.0.to_string(),
            field: fields.first().cloned(),
            fields,
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// Runs CPU-bound work on the blocking pool, bounded by the worker permits.
async fn blocking<T: Send + 'static>(
    state: &Arc<AppState>,
    work: impl FnOnce(&AppState) -> Result<T> + Send + 'static,
) -> ApiResult<T> {
    let _permit = state
        .workers
        .acquire()
        .await
        .expect("semaphore never closed");
    let state = Arc::clone(state);
    tokio::task::spawn_blocking(move || work(&state))
        .await
        .map_err(|e| Error::Format(format!("worker failed: {e}")))?
        .map_err(ApiError)
}

fn parse_opt<T: std::str::FromStr>(q: &HashMap<String, String>, name: &str) -> Result<Option<T>> {
    match q.get(name).map(|s| s.trim()).filter(|s| !s.is_empty()) {
        None => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|_| Error::constraint(format!("invalid `{name}` value `{s}`"), &[name])),
    }
}

fn parse_index_list(q: &HashMap<String, String>, name: &str) -> Result<BTreeSet<usize>> {
    match q.get(name) {
        None => Ok(BTreeSet::new()),
        Some(s) => s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| {
                p.parse().map_err(|_| {
                    Error::constraint(format!("invalid `{name}` entry `{p}`"), &[name])
                })
            })
            .collect(),
    }
}

fn elapsed_header(started: Instant) -> HeaderValue {
    HeaderValue::from_str(&format!("{:.3}", started.elapsed().as_secs_f64() * 1e3)).expect("ascii")
}

async fn list_datasets(State(state): State<Arc<AppState>>) -> Json<Vec<DatasetDescriptor>> {
    Json(
        state
            .datasets()
            .iter()
            .map(|d| DatasetDescriptor::of(d))
            .collect(),
    )
}

async fn describe_dataset(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<DatasetDescriptor>> {
    let ds = state.dataset(&id)?;
    Ok(Json(DatasetDescriptor::of(&ds)))
}

async fn frame(
    State(state): State<Arc<AppState>>,
    Path((id, t)): Path<(String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let started = Instant::now();
    let ds = state.dataset(&id)?;
    let t: usize = t
        .parse()
        .map_err(|_| Error::NotFound(format!("frame `{t}`")))?;
    if t >= ds.len() {
        return Err(Error::NotFound(format!("frame {t} of a {}-frame dataset", ds.len())).into());
    }
    let region: Option<Region> = parse_opt(&q, "region")?;
    let format = q
        .get("format")
        .map_or("f32", String::as_str)
        .to_ascii_lowercase();
    let cmap: Colormap = q.get("cmap").map_or(Ok(Colormap::Viridis), |s| s.parse())?;
    let vmin = parse_opt::<f64>(&q, "vmin")?.unwrap_or(ds.norm().vmin);
    let vmax = parse_opt::<f64>(&q, "vmax")?.unwrap_or(ds.norm().vmax);
    if format != "f32" && format != "png" {
        return Err(Error::constraint(format!("unknown format `{format}`"), &["format"]).into());
    }
    let (cropped, body) = blocking(&state, move |_| {
        let full = ds.frame(t).expect("index checked");
        let cropped = match region {
            Some(r) => crop(full, &r)?,
            None => full.clone(),
        };
        let body = if format == "png" {
            render_png(&cropped, cmap, vmin, vmax)?
        } else {
            encode_f32_le(cropped.values())
        };
        Ok((cropped, body))
    })
    .await?;

    let mut headers = HeaderMap::new();
    let content_type = if q
        .get("format")
        .is_some_and(|f| f.eq_ignore_ascii_case("png"))
    {
        "image/png"
    } else {
        "application/octet-stream"
    };
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static(content_type));
    let summary = cropped.summary();
    let stat = |f: fn(&crate::grid::FrameSummary) -> f64| {
        HeaderValue::from_str(
            &summary
                .as_ref()
                .map_or("nan".to_string(), |s| f(s).to_string()),
        )
        .expect("ascii")
    };
    headers.insert("x-frame-min", stat(|s| s.min));
    headers.insert("x-frame-max", stat(|s| s.max));
    headers.insert("x-frame-avg", stat(|s| s.mean));
    headers.insert("x-frame-width", HeaderValue::from(cropped.width()));
    headers.insert("x-frame-height", HeaderValue::from(cropped.height()));
    headers.insert("x-elapsed-ms", elapsed_header(started));
    Ok((headers, body).into_response())
}

/// 8-bit RGBA heatmap; NaN cells are fully transparent.
pub fn render_png(frame: &GridFrame, cmap: Colormap, vmin: f64, vmax: f64) -> Result<Vec<u8>> {
    let span = vmax - vmin;
    let mut rgba = Vec::with_capacity(frame.values().len() * 4);
    for &v in frame.values() {
        if v.is_nan() {
            rgba.extend_from_slice(&[0, 0, 0, 0]);
        } else {
            let t = if span > 0.0 { (v - vmin) / span } else { 0.0 };
            let [r, g, b] = cmap.rgb(t);
            rgba.extend_from_slice(&[r, g, b, 255]);
        }
    }
    let mut out = Vec::new();
    let width = u32::try_from(frame.width()).map_err(|_| Error::Bounds("frame too wide".into()))?;
    let height =
        u32::try_from(frame.height()).map_err(|_| Error::Bounds("frame too tall".into()))?;
    let mut encoder = png::Encoder::new(&mut out, width, height);
    encoder.set_color(png::ColorType::Rgba);
    encoder.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| Error::Format(format!("png encoding failed: {e}"));
    let mut writer = encoder.write_header().map_err(png_err)?;
    writer.write_image_data(&rgba).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(out)
}

/// Range given as `"a:b"`, `[a, b]` or `{"start": a, "end": b}`.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RangeSpec {
    Text(String),
    Pair([usize; 2]),
    Object(FocusRange),
}

impl RangeSpec {
    fn resolve(self) -> Result<FocusRange> {
        match self {
            RangeSpec::Text(s) => s.parse(),
            RangeSpec::Pair([a, b]) => Ok(FocusRange::new(a, b)),
            RangeSpec::Object(r) => Ok(r),
        }
    }
}

/// Region given as `"x0,y0,x1,y1"`, `[x0, y0, x1, y1]` or an object.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RegionSpec {
    Text(String),
    Quad([usize; 4]),
    Object(Region),
}

impl RegionSpec {
    fn resolve(self) -> Result<Region> {
        match self {
            RegionSpec::Text(s) => s.parse(),
            RegionSpec::Quad([x0, y0, x1, y1]) => Ok(Region::new(x0, y0, x1, y1)),
            RegionSpec::Object(r) => Ok(r),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectRequest {
    #[serde(default)]
    range: Option<RangeSpec>,
    k: usize,
    alpha: f64,
    beta: f64,
    #[serde(default)]
    aggregation: Option<AggregationKind>,
    #[serde(default)]
    region: Option<RegionSpec>,
    #[serde(default)]
    pinned: BTreeSet<usize>,
    #[serde(default)]
    excluded: BTreeSet<usize>,
    #[serde(default)]
    gamma: Option<f64>,
    #[serde(default)]
    sigma: Option<f64>,
}

async fn select(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let started = Instant::now();
    let request: SelectRequest = serde_json::from_slice(&body)
        .map_err(|e| Error::Format(format!("invalid selection request: {e}")))?;
    let ds = state.dataset(&id)?;
    let range = match request.range {
        Some(r) => r.resolve()?,
        None => ds.full_range()?,
    };
    let params = SelectionParams {
        alpha: request.alpha,
        beta: request.beta,
        k: request.k,
        gamma: request.gamma.unwrap_or(DEFAULT_GAMMA),
        sigma: request.sigma.unwrap_or(DEFAULT_SIGMA),
        aggregation: request.aggregation.unwrap_or(AggregationKind::Avg),
        region: request.region.map(RegionSpec::resolve).transpose()?,
        range,
        pinned: request.pinned,
        excluded: request.excluded,
    };
    let (response, lookup) = blocking(&state, move |s| s.select(&id, params)).await?;
    let body = serde_json::to_vec(&response).map_err(|e| Error::Format(e.to_string()))?;
    let mut headers = HeaderMap::new();
    headers.insert(
        header::CONTENT_TYPE,
        HeaderValue::from_static("application/json"),
    );
    headers.insert(
        "x-cache",
        HeaderValue::from_static(if lookup == Lookup::Hit { "hit" } else { "miss" }),
    );
    headers.insert("x-elapsed-ms", elapsed_header(started));
    Ok((headers, body).into_response())
}

async fn trend(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let kind: TrendKind = parse_opt(&q, "kind")?.unwrap_or(TrendKind::Structural);
    let range: Option<FocusRange> = parse_opt(&q, "range")?;
    let region: Option<Region> = parse_opt(&q, "region")?;
    let reference: Option<usize> = parse_opt(&q, "ref")?;
    state.dataset(&id)?;
    let response = blocking(&state, move |s| {
        s.trend(&id, kind, range, region, reference)
    })
    .await?;
    Ok(Json(response).into_response())
}

async fn embedding(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Json<EmbeddingResponse>> {
    let ds = state.dataset(&id)?;
    let range = match parse_opt::<FocusRange>(&q, "range")? {
        Some(r) => r,
        None => ds.full_range()?,
    };
    let region: Option<Region> = parse_opt(&q, "region")?;
    let cap = parse_opt::<usize>(&q, "cap")?.unwrap_or(DISPLAY_CAP);
    let salient = parse_index_list(&q, "salient")?;
    let response = blocking(&state, move |s| {
        let region = AppState::canonical_region(&ds, region)?;
        let (points, _) = s.embedding(&ds, region, range)?;
        Ok(EmbeddingResponse {
            method: "pca".into(),
            range,
            region,
            cap,
            points: sample_for_display(&points, &salient, cap)
                .into_iter()
                .filter(|p| !p.sampled_out)
                .collect(),
        })
    })
    .await?;
    Ok(Json(response))
}
