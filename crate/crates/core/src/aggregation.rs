//! NaN-aware per-step aggregation and the statistical variation cost.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Dataset, FocusRange, Region};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationKind {
    Max,
    Min,
    Avg,
}

impl fmt::Display for AggregationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregationKind::Max => "max",
            AggregationKind::Min => "min",
            AggregationKind::Avg => "avg",
        })
    }
}

impl FromStr for AggregationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "max" => Ok(AggregationKind::Max),
            "min" => Ok(AggregationKind::Min),
            "avg" | "mean" => Ok(AggregationKind::Avg),
            other => Err(Error::Format(format!("unknown aggregation `{other}`"))),
        }
    }
}

impl AggregationKind {
    /// Reduces the non-NaN values; NaN when there are none.
    pub fn reduce(self, values: impl Iterator<Item = f64>) -> f64 {
        let mut acc = match self {
            AggregationKind::Max => f64::NEG_INFINITY,
            AggregationKind::Min => f64::INFINITY,
            AggregationKind::Avg => 0.0,
        };
        let mut count = 0usize;
        for v in values.filter(|v| !v.is_nan()) {
            acc = match self {
                AggregationKind::Max => acc.max(v),
                AggregationKind::Min => acc.min(v),
                AggregationKind::Avg => acc + (v - acc) / (count + 1) as f64,
            };
            count += 1;
        }
        if count == 0 {
            f64::NAN
        } else {
            acc
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregatedSeries {
    pub kind: AggregationKind,
    pub region: Region,
    pub range: FocusRange,
    pub values: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl AggregatedSeries {
    pub fn compute(
        dataset: &Dataset,
        range: FocusRange,
        region: Option<&Region>,
        kind: AggregationKind,
    ) -> Result<Self> {
        let values = aggregate(dataset, range, region, kind)?;
        let normalized = normalize_series(&values)?;
        Ok(Self {
            kind,
            region: dataset.resolve_region(region)?,
            range,
            values,
            normalized,
        })
    }

    pub fn size_bytes(&self) -> usize {
        (self.values.len() + self.normalized.len()) * std::mem::size_of::<f64>()
    }
}

/// Per-step aggregate over `region` (whole frame when `None`) for each frame
/// in `range`.
pub fn aggregate(
    dataset: &Dataset,
    range: FocusRange,
    region: Option<&Region>,
    kind: AggregationKind,
) -> Result<Vec<f64>> {
    range.validate(dataset.len())?;
    let region = dataset.resolve_region(region)?;
    let width = dataset.width();
    Ok(dataset.frames()[range.start..=range.end]
        .par_iter()
        .map(|frame| {
            let values = frame.values();
            let cells = (region.y0..=region.y1).flat_map(|y| {
                values[y * width + region.x0..=y * width + region.x1]
                    .iter()
                    .copied()
            });
            kind.reduce(cells)
        })
        .collect())
}

/// Min-max scaling onto [0, 1] ignoring NaN; a constant series maps to 0.
pub fn normalize_series(values: &[f64]) -> Result<Vec<f64>> {
    let lo = AggregationKind::Min.reduce(values.iter().copied());
    let hi = AggregationKind::Max.reduce(values.iter().copied());
    if lo.is_nan() {
        return Err(Error::EmptyData("aggregated series is entirely NaN".into()));
    }
    let span = hi - lo;
    Ok(values
        .iter()
        .map(|&v| {
            if v.is_nan() {
                v
            } else if span > 0.0 {
                (v - lo) / span
            } else {
                0.0
            }
        })
        .collect())
}

/// `1 − tanh|a − b|`; missing values get the maximal cost 1.
#[inline]
pub fn statistical_cost(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        1.0
    } else {
        1.0 - (a - b).abs().tanh()
    }
}
