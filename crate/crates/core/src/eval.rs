//! Piecewise-linear reconstruction from selected steps and its scoring.
//!
//! Metrics compare frames normalized by the dataset extrema with NaN cells
//! filled by 0, so every score is on the unit value range.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::aggregation::AggregationKind;
use crate::embedding::project_2d;
use crate::engine::{resolve_codes, run_selection, CostInputs};
use crate::error::{Error, Result};
use crate::features::LatentCode;
use crate::grid::{crop, fill_nan, normalize, Dataset, FocusRange, GridFrame, NormStats, Region};
use crate::selector::{
    arc_based_selection, even_selection, normalize_trajectory, ArcThresholds, SelectionParams,
    DEFAULT_GAMMA, DEFAULT_SIGMA,
};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Weights used by the β-sweep.
pub const BETA_SWEEP: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Reconstructs every frame of `range` from the frames at `steps` (absolute,
/// strictly increasing, first = range start, last = range end).
pub fn interpolate(
    dataset: &Dataset,
    range: FocusRange,
    steps: &[usize],
) -> Result<Vec<GridFrame>> {
    range.validate(dataset.len())?;
    if steps.first() != Some(&range.start) || steps.last() != Some(&range.end) {
        return Err(Error::constraint(
            "steps must start and end at the range endpoints",
            &["steps"],
        ));
    }
    if steps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::constraint(
            "steps must be strictly increasing",
            &["steps"],
        ));
    }
    let frames = dataset.frames();
    let mut out = Vec::with_capacity(range.len());
    out.push(frames[range.start].clone());
    for w in steps.windows(2) {
        let (s0, s1) = (w[0], w[1]);
        let (a, b) = (frames[s0].values(), frames[s1].values());
        for t in s0 + 1..s1 {
            let f = (t - s0) as f64 / (s1 - s0) as f64;
            let values = a.iter().zip(b).map(|(&x, &y)| x + f * (y - x)).collect();
            out.push(GridFrame::new(dataset.width(), dataset.height(), values)?);
        }
        out.push(frames[s1].clone());
    }
    Ok(out)
}

/// Crops, normalizes and zero-fills frames for scoring.
pub fn prepare_for_metrics(
    frames: &[GridFrame],
    norm: &NormStats,
    region: Option<&Region>,
) -> Result<Vec<GridFrame>> {
    frames
        .iter()
        .map(|f| {
            let cropped = match region {
                Some(r) => crop(f, r)?,
                None => f.clone(),
            };
            Ok(fill_nan(&normalize(&cropped, norm), 0.0))
        })
        .collect()
}

fn check_shapes(a: &[GridFrame], b: &[GridFrame]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Bounds(format!(
            "{} frames compared with {}",
            a.len(),
            b.len()
        )));
    }
    for (x, y) in a.iter().zip(b) {
        if (x.width(), x.height()) != (y.width(), y.height()) {
            return Err(Error::Bounds("compared frames differ in size".into()));
        }
    }
    Ok(())
}

/// Mean squared difference over cells that are non-NaN in both inputs.
pub fn mse(a: &[GridFrame], b: &[GridFrame]) -> Result<f64> {
    check_shapes(a, b)?;
    let (mut sum, mut count) = (0.0, 0usize);
    for (x, y) in a.iter().zip(b) {
        for (&u, &v) in x.values().iter().zip(y.values()) {
            if !u.is_nan() && !v.is_nan() {
                sum += (u - v) * (u - v);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyData("no cell is valid in both inputs".into()));
    }
    Ok(sum / count as f64)
}

pub fn rmse(a: &[GridFrame], b: &[GridFrame]) -> Result<f64> {
    mse(a, b).map(f64::sqrt)
}

/// Peak signal-to-noise ratio on unit-range data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Db(f64),
    /// Identical inputs.
    Infinite,
}

impl Psnr {
    pub fn from_mse(mse: f64) -> Self {
        if mse == 0.0 {
            Psnr::Infinite
        } else {
            Psnr::Db(10.0 * (1.0 / mse).log10())
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Psnr::Db(v) => v,
            Psnr::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Db(v) => write!(f, "{v}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Psnr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Psnr::Db(v) => s.serialize_f64(*v),
            Psnr::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Psnr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Db(f64),
            Token(String),
        }
        match Repr::deserialize(d)? {
            Repr::Db(v) => Ok(Psnr::Db(v)),
            Repr::Token(t) if t == "inf" => Ok(Psnr::Infinite),
            Repr::Token(t) => Err(serde::de::Error::custom(format!("invalid psnr `{t}`"))),
        }
    }
}

pub fn psnr(a: &[GridFrame], b: &[GridFrame]) -> Result<Psnr> {
    mse(a, b).map(Psnr::from_mse)
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = w.iter().sum();
    w.map(|v| v / total)
}

/// Valid-mode separable filtering with `kernel`.
fn filter_valid(values: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let n = kernel.len();
    let (ow, oh) = (width + 1 - n, height + 1 - n);
    let mut rows = vec![0.0; ow * height];
    for y in 0..height {
        let src = &values[y * width..(y + 1) * width];
        for x in 0..ow {
            rows[y * ow + x] = kernel.iter().zip(&src[x..x + n]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

#[inline]
fn ssim_index(ma: f64, mb: f64, vaa: f64, vbb: f64, vab: f64) -> f64 {
    ((2.0 * ma * mb + SSIM_C1) * (2.0 * vab + SSIM_C2))
        / ((ma * ma + mb * mb + SSIM_C1) * (vaa + vbb + SSIM_C2))
}

/// Mean structural similarity of two equally sized frames (dynamic range 1).
/// Frames narrower or shorter than the window use one global window.
pub fn ssim(a: &GridFrame, b: &GridFrame) -> Result<f64> {
    let (w, h) = (a.width(), a.height());
    if (w, h) != (b.width(), b.height()) {
        return Err(Error::Bounds("compared frames differ in size".into()));
    }
    let (x, y) = (a.values(), b.values());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        let n = x.len() as f64;
        let (ma, mb) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
        for (&u, &v) in x.iter().zip(y) {
            vaa += (u - ma) * (u - ma);
            vbb += (v - mb) * (v - mb);
            vab += (u - ma) * (v - mb);
        }
        return Ok(ssim_index(ma, mb, vaa / n, vbb / n, vab / n));
    }
    let kernel = gaussian_window();
    let product =
        |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(u, v)| u * v).collect() };
    let ma = filter_valid(x, w, h, &kernel);
    let mb = filter_valid(y, w, h, &kernel);
    let eaa = filter_valid(&product(x, x), w, h, &kernel);
    let ebb = filter_valid(&product(y, y), w, h, &kernel);
    let eab = filter_valid(&product(x, y), w, h, &kernel);
    let total: f64 = (0..ma.len())
        .map(|i| {
            let (p, q) = (ma[i], mb[i]);
            ssim_index(p, q, eaa[i] - p * p, ebb[i] - q * q, eab[i] - p * q)
        })
        .sum();
    Ok(total / ma.len() as f64)
}

/// Mean of per-frame SSIM.
pub fn ssim_frames(a: &[GridFrame], b: &[GridFrame]) -> Result<f64> {
    check_shapes(a, b)?;
    if a.is_empty() {
        return Err(Error::EmptyData("no frames to compare".into()));
    }
    let total = a
        .iter()
        .zip(b)
        .map(|(x, y)| ssim(x, y))
        .sum::<Result<f64>>()?;
    Ok(total / a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dp,
    Even,
    Arc,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Dp => "dp",
            Method::Even => "even",
            Method::Arc => "arc",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dp" => Ok(Method::Dp),
            "even" => Ok(Method::Even),
            "arc" => Ok(Method::Arc),
            other => Err(Error::Format(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Whole dataset when `None`.
    pub range: Option<FocusRange>,
    pub region: Option<Region>,
    pub methods: Vec<Method>,
    pub ks: Vec<usize>,
    pub beta_sweep: bool,
    pub aggregation: AggregationKind,
    pub gamma: f64,
    pub sigma: f64,
    pub arc: ArcThresholds,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            range: None,
            region: None,
            methods: vec![Method::Dp, Method::Even, Method::Arc],
            ks: vec![5, 10, 20],
            beta_sweep: false,
            aggregation: AggregationKind::Avg,
            gamma: DEFAULT_GAMMA,
            sigma: DEFAULT_SIGMA,
            arc: ArcThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: Method,
    pub k: usize,
    pub rmse: f64,
    pub psnr_db: Psnr,
    pub ssim: f64,
    pub select_ms: f64,
    pub interp_ms: f64,
    pub steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    pub method: Method,
    pub k: usize,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub k: usize,
    pub steps: Vec<usize>,
    pub rmse: f64,
    pub psnr_db: Psnr,
    pub ssim: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub codes_ms: f64,
    pub costs_ms: f64,
    pub embedding_ms: f64,
    pub cells_ms: f64,
    pub sweep_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub range: FocusRange,
    pub region: Option<Region>,
    pub methods: Vec<Method>,
    pub ks: Vec<usize>,
    pub rows: Vec<EvalRow>,
    pub errors: Vec<RowError>,
    /// Number of steps the arc baseline picks at its default thresholds.
    pub arc_default_k: Option<usize>,
    pub beta_sweep: Vec<SweepRow>,
    pub stages: StageTimings,
}

pub const CSV_HEADER: &str = "method,k,rmse,psnr_db,ssim,select_ms,interp_ms";

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.3},{:.3}\n",
                r.method, r.k, r.rmse, r.psnr_db, r.ssim, r.select_ms, r.interp_ms
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn row(&self, method: Method, k: usize) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.method == method && r.k == k)
    }
}

fn millis(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Scales both arc thresholds by a common factor until exactly `k` steps are
/// selected. Returns range-relative indices.
pub fn arc_selection_with_k(
    points: &[[f64; 2]],
    base: &ArcThresholds,
    k: usize,
) -> Result<Vec<usize>> {
    let run = |scale: f64| {
        let th = ArcThresholds {
            eps: base.eps * scale,
            theta: base.theta * scale,
            mix: base.mix,
        };
        arc_based_selection(points, &th)
    };
    let (mut lo, mut hi) = (1e-9f64, 1e9f64);
    let at_default = run(1.0)?;
    if at_default.len() == k {
        return Ok(at_default);
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        let steps = run(mid)?;
        match steps.len().cmp(&k) {
            std::cmp::Ordering::Equal => return Ok(steps),
            std::cmp::Ordering::Greater => lo = mid,
            std::cmp::Ordering::Less => hi = mid,
        }
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    Err(Error::constraint(
        format!("no arc threshold scale yields exactly {k} steps"),
        &["k"],
    ))
}

struct Scored {
    rmse: f64,
    psnr: Psnr,
    ssim: f64,
}

/// Runs each (method, k) cell and the optional β-sweep. Codes are computed
/// from the dataset unless `codes` is given.
pub fn evaluate(
    dataset: &Dataset,
    config: &EvalConfig,
    codes: Option<Vec<LatentCode>>,
) -> Result<EvalReport> {
    let range = match config.range {
        Some(r) => {
            r.validate(dataset.len())?;
            r
        }
        None => dataset.full_range()?,
    };
    let region = config.region.as_ref();
    let mut stages = StageTimings::default();

    let clock = Instant::now();
    let codes = resolve_codes(dataset, region, codes)?;
    stages.codes_ms = millis(clock);

    let clock = Instant::now();
    let inputs = CostInputs::build(dataset, &codes, range, region, config.aggregation)?;
    stages.costs_ms = millis(clock);

    let clock = Instant::now();
    let trajectory = if config.methods.contains(&Method::Arc) || config.beta_sweep {
        let points = project_2d(&codes[range.start..=range.end])?;
        Some(normalize_trajectory(
            &points.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>(),
        ))
    } else {
        None
    };
    let arc_default_k = match &trajectory {
        Some(t) => Some(arc_based_selection(t, &config.arc)?.len()),
        None => None,
    };
    stages.embedding_ms = millis(clock);

    let original = prepare_for_metrics(
        &dataset.frames()[range.start..=range.end],
        &dataset.norm(),
        region,
    )?;
    let score = |steps: &[usize]| -> Result<Scored> {
        let rebuilt = interpolate(dataset, range, steps)?;
        let rebuilt = prepare_for_metrics(&rebuilt, &dataset.norm(), region)?;
        let m = mse(&original, &rebuilt)?;
        Ok(Scored {
            rmse: m.sqrt(),
            psnr: Psnr::from_mse(m),
            ssim: ssim_frames(&original, &rebuilt)?,
        })
    };
    let dp_params = |k: usize, beta: f64| SelectionParams {
        gamma: config.gamma,
        sigma: config.sigma,
        aggregation: config.aggregation,
        region: config.region,
        ..SelectionParams::new(range, k, 1.0 - beta, beta)
    };

    let clock = Instant::now();
    let cells: Vec<(Method, usize)> = config
        .methods
        .iter()
        .flat_map(|&m| config.ks.iter().map(move |&k| (m, k)))
        .collect();
    let outcomes: Vec<(Method, usize, Result<EvalRow>)> = cells
        .par_iter()
        .map(|&(method, k)| {
            let row = (|| {
                let started = Instant::now();
                let steps = match method {
                    Method::Dp => run_selection(dataset, &inputs, &dp_params(k, 0.0))?.steps,
                    Method::Even => even_selection(range.len(), k)?
                        .into_iter()
                        .map(|s| s + range.start)
                        .collect(),
                    Method::Arc => {
                        let t = trajectory.as_ref().expect("trajectory computed for arc");
                        if k > range.len() || k < 2 {
                            return Err(Error::constraint(
                                format!("k = {k} is infeasible for {} frames", range.len()),
                                &["k"],
                            ));
                        }
                        arc_selection_with_k(t, &config.arc, k)?
                            .into_iter()
                            .map(|s| s + range.start)
                            .collect()
                    }
                };
                let select_ms = millis(started);
                let started = Instant::now();
                let scored = score(&steps)?;
                Ok(EvalRow {
                    method,
                    k,
                    rmse: scored.rmse,
                    psnr_db: scored.psnr,
                    ssim: scored.ssim,
                    select_ms,
                    interp_ms: millis(started),
                    steps,
                })
            })();
            (method, k, row)
        })
        .collect();
    stages.cells_ms = millis(clock);

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (method, k, outcome) in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) => errors.push(RowError {
                method,
                k,
                code: e.code().into(),
                message: e.to_string(),
            }),
        }
    }

    let clock = Instant::now();
    let mut beta_sweep = Vec::new();
    if config.beta_sweep {
        let k = arc_default_k
            .filter(|&k| k >= 2)
            .or_else(|| config.ks.first().copied())
            .ok_or_else(|| Error::constraint("the β-sweep needs at least one k", &["ks"]))?;
        beta_sweep = BETA_SWEEP
            .par_iter()
            .map(|&beta| {
                let steps = run_selection(dataset, &inputs, &dp_params(k, beta))?.steps;
                let s = score(&steps)?;
                Ok(SweepRow {
                    beta,
                    k,
                    steps,
                    rmse: s.rmse,
                    psnr_db: s.psnr,
                    ssim: s.ssim,
                })
            })
            .collect::<Result<Vec<_>>>()?;
    }
    stages.sweep_ms = millis(clock);

    Ok(EvalReport {
        dataset: dataset.id().to_string(),
        range,
        region: config.region,
        methods: config.methods.clone(),
        ks: config.ks.clone(),
        rows,
        errors,
        arc_default_k,
        beta_sweep,
        stages,
    })
}
