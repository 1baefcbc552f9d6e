//! In-memory raster time series: frames, datasets, regions and focus ranges.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One time step of a scalar field, row-major, NaN marks missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFrame {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl GridFrame {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Bounds(format!(
                "frame dimensions {width}x{height} have zero area"
            )));
        }
        if values.len() != width * height {
            return Err(Error::Format(format!(
                "frame of {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn full_region(&self) -> Region {
        Region::full(self.width, self.height)
    }

    /// NaN-aware (min, max, mean); `None` when every cell is NaN.
    pub fn summary(&self) -> Option<FrameSummary> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut count = 0usize;
        for &v in self.values.iter().filter(|v| !v.is_nan()) {
            min = min.min(v);
            max = max.max(v);
            sum += v;
            count += 1;
        }
        (count > 0).then(|| FrameSummary {
            min,
            max,
            mean: sum / count as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Inclusive pixel window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Region {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::new(0, 0, width - 1, height - 1)
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.x0 > self.x1 || self.y0 > self.y1 || self.x1 >= width || self.y1 >= height {
            return Err(Error::Bounds(format!(
                "region {self} does not fit a {width}x{height} grid"
            )));
        }
        Ok(())
    }

    pub fn is_full(&self, width: usize, height: usize) -> bool {
        *self == Self::full(width, height)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x0, self.y0, self.x1, self.y1)
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("region `{s}` must be x0,y0,x1,y1")))?;
        match parts.as_slice() {
            [x0, y0, x1, y1] => Ok(Region::new(*x0, *y0, *x1, *y1)),
            _ => Err(Error::Format(format!("region `{s}` must be x0,y0,x1,y1"))),
        }
    }
}

/// Inclusive span of frame indices, at least two frames long.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FocusRange {
    pub start: usize,
    pub end: usize,
}

impl FocusRange {
    /// Unchecked constructor; call [`FocusRange::validate`] against a dataset.
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn full(frames: usize) -> Result<Self> {
        let r = Self::new(0, frames.saturating_sub(1));
        r.validate(frames)?;
        Ok(r)
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: usize) -> bool {
        (self.start..=self.end).contains(&t)
    }

    pub fn validate(&self, frames: usize) -> Result<()> {
        if self.start >= self.end {
            return Err(Error::constraint(
                format!("focus range {self} must span at least two frames"),
                &["range"],
            ));
        }
        if self.end >= frames {
            return Err(Error::constraint(
                format!("focus range {self} exceeds the {frames} available frames"),
                &["range"],
            ));
        }
        Ok(())
    }
}

impl fmt::Display for FocusRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

impl FromStr for FocusRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("range `{s}` must be start:end"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let start = a.trim().parse().map_err(|_| bad())?;
        let end = b.trim().parse().map_err(|_| bad())?;
        Ok(FocusRange::new(start, end))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub vmin: f64,
    pub vmax: f64,
}

impl NormStats {
    /// NaN-aware extrema over every frame.
    pub fn from_frames(frames: &[GridFrame]) -> Result<Self> {
        let mut vmin = f64::INFINITY;
        let mut vmax = f64::NEG_INFINITY;
        for v in frames
            .iter()
            .flat_map(|f| f.values())
            .filter(|v| !v.is_nan())
        {
            vmin = vmin.min(*v);
            vmax = vmax.max(*v);
        }
        if vmin > vmax {
            return Err(Error::EmptyData("every value in the dataset is NaN".into()));
        }
        if !vmin.is_finite() || !vmax.is_finite() {
            return Err(Error::Format("dataset contains infinite values".into()));
        }
        Ok(Self { vmin, vmax })
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        if v.is_nan() {
            v
        } else if self.vmax > self.vmin {
            (v - self.vmin) / (self.vmax - self.vmin)
        } else {
            0.0
        }
    }

    #[inline]
    pub fn invert(&self, v: f64) -> f64 {
        v * (self.vmax - self.vmin) + self.vmin
    }
}

/// Immutable stack of equally sized frames with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    id: String,
    variable: String,
    frames: Vec<GridFrame>,
    timestamps: Vec<DateTime<Utc>>,
    extent: [f64; 4],
    norm: NormStats,
}

impl Dataset {
    pub fn new(
        id: impl Into<String>,
        variable: impl Into<String>,
        frames: Vec<GridFrame>,
        timestamps: Vec<DateTime<Utc>>,
        extent: [f64; 4],
    ) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::EmptyData("dataset has no frames".into()))?;
        let (w, h) = (first.width(), first.height());
        if let Some((i, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.width() != w || f.height() != h)
        {
            return Err(Error::Format(format!(
                "frame {i} is {}x{}, expected {w}x{h}",
                f.width(),
                f.height()
            )));
        }
        if timestamps.len() != frames.len() {
            return Err(Error::Format(format!(
                "{} timestamps for {} frames",
                timestamps.len(),
                frames.len()
            )));
        }
        if let Some(i) = timestamps.windows(2).position(|p| p[0] >= p[1]) {
            return Err(Error::Format(format!(
                "timestamps must be strictly increasing (index {})",
                i + 1
            )));
        }
        let norm = NormStats::from_frames(&frames)?;
        Ok(Self {
            id: id.into(),
            variable: variable.into(),
            frames,
            timestamps,
            extent,
            norm,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn variable(&self) -> &str {
        &self.variable
    }

    pub fn frames(&self) -> &[GridFrame] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> Option<&GridFrame> {
        self.frames.get(t)
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }

    pub fn extent(&self) -> [f64; 4] {
        self.extent
    }

    pub fn norm(&self) -> NormStats {
        self.norm
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn full_region(&self) -> Region {
        Region::full(self.width(), self.height())
    }

    pub fn full_range(&self) -> Result<FocusRange> {
        FocusRange::full(self.len())
    }

    /// Resolves an optional region to a concrete, validated one.
    pub fn resolve_region(&self, region: Option<&Region>) -> Result<Region> {
        match region {
            Some(r) => {
                r.validate(self.width(), self.height())?;
                Ok(*r)
            }
            None => Ok(self.full_region()),
        }
    }
}

pub fn crop(frame: &GridFrame, region: &Region) -> Result<GridFrame> {
    region.validate(frame.width(), frame.height())?;
    if region.is_full(frame.width(), frame.height()) {
        return Ok(frame.clone());
    }
    let mut values = Vec::with_capacity(region.width() * region.height());
    for y in region.y0..=region.y1 {
        let row = y * frame.width();
        values.extend_from_slice(&frame.values()[row + region.x0..=row + region.x1]);
    }
    GridFrame::new(region.width(), region.height(), values)
}

/// Maps non-NaN values onto [0, 1] with the dataset extrema.
pub fn normalize(frame: &GridFrame, norm: &NormStats) -> GridFrame {
    map_values(frame, |v| norm.apply(v))
}

pub fn fill_nan(frame: &GridFrame, fill: f64) -> GridFrame {
    map_values(frame, |v| if v.is_nan() { fill } else { v })
}

fn map_values(frame: &GridFrame, f: impl Fn(f64) -> f64) -> GridFrame {
    GridFrame {
        width: frame.width,
        height: frame.height,
        values: frame.values.iter().map(|&v| f(v)).collect(),
    }
}
