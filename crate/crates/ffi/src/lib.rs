//! C ABI over the stepselect engine.
//!
//! Datasets and selections are opaque heap handles released with their
//! `_free` function. Every fallible call returns an [`ss_status`]; on failure
//! [`ss_last_error_message`] describes the error for the calling thread.
//! Indices are 0-based and ranges inclusive.

#![allow(non_camel_case_types)]
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chrono::TimeDelta;
use stepselect::aggregation::{statistical_cost, AggregationKind};
use stepselect::engine::select_on_dataset;
use stepselect::error::Error;
use stepselect::features::similarity_cost;
use stepselect::grid::{Dataset, FocusRange, GridFrame, Region};
use stepselect::selector::{
    distance_cost, select_salient, Constraints, CostMatrix, SelectionParams, DEFAULT_GAMMA,
    DEFAULT_SIGMA,
};
use stepselect::store::{default_timestamps, open_dataset};
use stepselect::synth::{synthesize, Family, SyntheticSpec};

/// Result of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ss_status {
    SS_OK = 0,
    SS_ERR_NULL_POINTER = 1,
    SS_ERR_FORMAT = 2,
    SS_ERR_EMPTY_DATA = 3,
    SS_ERR_BOUNDS = 4,
    SS_ERR_INVALID_CODE = 5,
    SS_ERR_CONSTRAINT = 6,
    SS_ERR_NOT_FOUND = 7,
    SS_ERR_IO = 8,
    SS_ERR_INVALID_ARGUMENT = 9,
    SS_ERR_PANIC = 10,
}

/// Aggregation applied over the region for the statistical cost.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ss_aggregation {
    SS_AGG_MAX = 0,
    SS_AGG_MIN = 1,
    SS_AGG_AVG = 2,
}

/// Opaque dataset handle.
pub struct ss_dataset {
    inner: Dataset,
}

/// Opaque selection handle.
pub struct ss_selection {
    steps: Vec<usize>,
    total_cost: f64,
}

/// Selection request. `pinned`/`excluded` may be null when their length is 0.
/// The region is used only when `has_region` is non-zero.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ss_select_params {
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub gamma: f64,
    pub sigma: f64,
    pub aggregation: ss_aggregation,
    pub range_start: usize,
    pub range_end: usize,
    pub has_region: i32,
    /// `x0, y0, x1, y1`, inclusive.
    pub region: [usize; 4],
    pub pinned: *const usize,
    pub pinned_len: usize,
    pub excluded: *const usize,
    pub excluded_len: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(error: &Error) -> ss_status {
    match error {
        Error::Format(_) => ss_status::SS_ERR_FORMAT,
        Error::EmptyData(_) => ss_status::SS_ERR_EMPTY_DATA,
        Error::Bounds(_) => ss_status::SS_ERR_BOUNDS,
        Error::InvalidCode(_) => ss_status::SS_ERR_INVALID_CODE,
        Error::Constraint { .. } => ss_status::SS_ERR_CONSTRAINT,
        Error::NotFound(_) => ss_status::SS_ERR_NOT_FOUND,
        Error::Io(_) => ss_status::SS_ERR_IO,
    }
}

enum Failure {
    Engine(Error),
    Null(&'static str),
    Argument(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

/// Runs `body`, translating errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> ss_status {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => ss_status::SS_OK,
        Ok(Err(Failure::Engine(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(&format!("{what} must not be null"));
            ss_status::SS_ERR_NULL_POINTER
        }
        Ok(Err(Failure::Argument(msg))) => {
            set_error(&msg);
            ss_status::SS_ERR_INVALID_ARGUMENT
        }
        Err(_) => {
            set_error("internal panic");
            ss_status::SS_ERR_PANIC
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Argument(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(
    p: *const T,
    len: usize,
    what: &'static str,
) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut *mut T, what: &'static str) -> Result<&'a mut *mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn ss_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opens a frame-stack or CSV directory.
#[no_mangle]
pub unsafe extern "C" fn ss_dataset_open(
    path: *const c_char,
    out: *mut *mut ss_dataset,
) -> ss_status {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        *out = Box::into_raw(Box::new(ss_dataset {
            inner: open_dataset(path)?,
        }));
        Ok(())
    })
}

/// Generates a synthetic dataset. `family` is one of "ramp", "burst",
/// "blob", "seasonal"; `bursts` may be null when `bursts_len` is 0.
#[no_mangle]
pub unsafe extern "C" fn ss_dataset_synthesize(
    family: *const c_char,
    frames: usize,
    width: usize,
    height: usize,
    seed: u64,
    bursts: *const usize,
    bursts_len: usize,
    out: *mut *mut ss_dataset,
) -> ss_status {
    guard(|| {
        let out = out_arg(out, "out")?;
        let family: Family = str_arg(family, "family")?.parse()?;
        let bursts = slice_arg(bursts, bursts_len, "bursts")?.to_vec();
        let spec = SyntheticSpec::new(family, frames, width, height, seed).with_bursts(bursts);
        *out = Box::into_raw(Box::new(ss_dataset {
            inner: synthesize(&spec)?,
        }));
        Ok(())
    })
}

/// Builds a dataset from `count` row-major frames of `width × height` values
/// laid out consecutively. NaN marks missing cells. Timestamps are hourly.
#[no_mangle]
pub unsafe extern "C" fn ss_dataset_from_values(
    id: *const c_char,
    width: usize,
    height: usize,
    count: usize,
    values: *const f64,
    out: *mut *mut ss_dataset,
) -> ss_status {
    guard(|| {
        let out = out_arg(out, "out")?;
        let id = str_arg(id, "id")?;
        let cells = width
            .checked_mul(height)
            .and_then(|c| c.checked_mul(count))
            .ok_or_else(|| Failure::Argument("dataset size overflows".into()))?;
        let values = slice_arg(values, cells, "values")?;
        let frames = if cells == 0 {
            Vec::new()
        } else {
            values
                .chunks_exact(width * height)
                .map(|c| GridFrame::new(width, height, c.to_vec()))
                .collect::<Result<Vec<_>, _>>()?
        };
        let timestamps = default_timestamps(count, TimeDelta::hours(1));
        let dataset = Dataset::new(
            id,
            "value",
            frames,
            timestamps,
            [-180.0, -90.0, 180.0, 90.0],
        )?;
        *out = Box::into_raw(Box::new(ss_dataset { inner: dataset }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ss_dataset_free(dataset: *mut ss_dataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of frames; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ss_dataset_len(dataset: *const ss_dataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.len())
}

#[no_mangle]
pub unsafe extern "C" fn ss_dataset_width(dataset: *const ss_dataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.width())
}

#[no_mangle]
pub unsafe extern "C" fn ss_dataset_height(dataset: *const ss_dataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.height())
}

/// Parameters with default γ, σ and average aggregation, no region and no
/// constraints.
#[no_mangle]
pub extern "C" fn ss_select_params_default(
    range_start: usize,
    range_end: usize,
    k: usize,
    alpha: f64,
    beta: f64,
) -> ss_select_params {
    ss_select_params {
        alpha,
        beta,
        k,
        gamma: DEFAULT_GAMMA,
        sigma: DEFAULT_SIGMA,
        aggregation: ss_aggregation::SS_AGG_AVG,
        range_start,
        range_end,
        has_region: 0,
        region: [0; 4],
        pinned: ptr::null(),
        pinned_len: 0,
        excluded: ptr::null(),
        excluded_len: 0,
    }
}

/// Selects salient frames of a dataset with pyramid-descriptor codes.
#[no_mangle]
pub unsafe extern "C" fn ss_select(
    dataset: *const ss_dataset,
    params: *const ss_select_params,
    out: *mut *mut ss_selection,
) -> ss_status {
    guard(|| {
        let out = out_arg(out, "out")?;
        let dataset = dataset.as_ref().ok_or(Failure::Null("dataset"))?;
        let p = params.as_ref().ok_or(Failure::Null("params"))?;
        let [x0, y0, x1, y1] = p.region;
        let params = SelectionParams {
            alpha: p.alpha,
            beta: p.beta,
            k: p.k,
            gamma: p.gamma,
            sigma: p.sigma,
            aggregation: match p.aggregation {
                ss_aggregation::SS_AGG_MAX => AggregationKind::Max,
                ss_aggregation::SS_AGG_MIN => AggregationKind::Min,
                ss_aggregation::SS_AGG_AVG => AggregationKind::Avg,
            },
            region: (p.has_region != 0).then(|| Region::new(x0, y0, x1, y1)),
            range: FocusRange::new(p.range_start, p.range_end),
            pinned: slice_arg(p.pinned, p.pinned_len, "pinned")?
                .iter()
                .copied()
                .collect(),
            excluded: slice_arg(p.excluded, p.excluded_len, "excluded")?
                .iter()
                .copied()
                .collect(),
        };
        let result = select_on_dataset(&dataset.inner, &params, None)?;
        *out = Box::into_raw(Box::new(ss_selection {
            steps: result.steps,
            total_cost: result.total_cost,
        }));
        Ok(())
    })
}

/// Selects `k` of `n` steps minimizing the summed cost of consecutive pairs
/// taken from the row-major `n × n` matrix `costs` (entry `i·n + j`, `i < j`).
#[no_mangle]
pub unsafe extern "C" fn ss_select_with_costs(
    n: usize,
    k: usize,
    costs: *const f64,
    pinned: *const usize,
    pinned_len: usize,
    excluded: *const usize,
    excluded_len: usize,
    out: *mut *mut ss_selection,
) -> ss_status {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cells = n
            .checked_mul(n)
            .ok_or_else(|| Failure::Argument("n overflows".into()))?;
        let costs = slice_arg(costs, cells, "costs")?;
        let table = CostMatrix::from_fn(n, |i, j| costs[i * n + j]);
        let pinned: BTreeSet<usize> = slice_arg(pinned, pinned_len, "pinned")?
            .iter()
            .copied()
            .collect();
        let excluded: BTreeSet<usize> = slice_arg(excluded, excluded_len, "excluded")?
            .iter()
            .copied()
            .collect();
        let selection = select_salient(n, k, &table, &Constraints::new(pinned, excluded))?;
        *out = Box::into_raw(Box::new(ss_selection {
            steps: selection.steps,
            total_cost: selection.total_cost,
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ss_selection_free(selection: *mut ss_selection) {
    if !selection.is_null() {
        drop(Box::from_raw(selection));
    }
}

/// Number of selected steps; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ss_selection_len(selection: *const ss_selection) -> usize {
    selection.as_ref().map_or(0, |s| s.steps.len())
}

/// Selected frame indices, ascending; valid while the handle lives.
#[no_mangle]
pub unsafe extern "C" fn ss_selection_steps(selection: *const ss_selection) -> *const usize {
    selection.as_ref().map_or(ptr::null(), |s| s.steps.as_ptr())
}

/// Summed pair cost of the selection; NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ss_selection_total_cost(selection: *const ss_selection) -> f64 {
    selection.as_ref().map_or(f64::NAN, |s| s.total_cost)
}

/// Structural cost of a cosine similarity in [-1, 1].
#[no_mangle]
pub extern "C" fn ss_structural_cost(similarity: f64) -> f64 {
    similarity_cost(similarity)
}

/// Statistical cost of two normalized aggregates; NaN inputs give 1.
#[no_mangle]
pub extern "C" fn ss_statistical_cost(a: f64, b: f64) -> f64 {
    statistical_cost(a, b)
}

/// Distance cost of steps `i`, `j` in a range of `n` frames selecting `k`.
#[no_mangle]
pub extern "C" fn ss_distance_cost(
    i: usize,
    j: usize,
    n: usize,
    k: usize,
    gamma: f64,
    sigma: f64,
) -> f64 {
    distance_cost(i, j, n, k, gamma, sigma)
}
