//! On-disk frame stacks.
//!
//! A frame-stack directory holds `meta.json` plus one `frame_%06d.f32` file per
//! time step (little-endian IEEE-754 single precision, row-major). Values are
//! widened to `f64` on read and narrowed on write.

use std::fs;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Dataset, GridFrame};

pub const META_FILE: &str = "meta.json";
const DEFAULT_EXTENT: [f64; 4] = [-180.0, -90.0, 180.0, 90.0];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackMeta {
    pub id: String,
    pub variable: String,
    pub width: usize,
    pub height: usize,
    pub count: usize,
    pub timestamps: Vec<String>,
    pub extent: [f64; 4],
}

pub fn frame_file_name(t: usize) -> String {
    format!("frame_{t:06}.f32")
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    if let Ok(t) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f") {
        return Ok(t.and_utc());
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc());
    }
    Err(Error::Format(format!("`{s}` is not an ISO-8601 timestamp")))
}

/// Evenly spaced timestamps starting 2000-01-01, used when a source has none.
pub fn default_timestamps(count: usize, step: TimeDelta) -> Vec<DateTime<Utc>> {
    let origin = NaiveDate::from_ymd_opt(2000, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid origin")
        .and_utc();
    (0..count).map(|i| origin + step * i as i32).collect()
}

fn read_meta(dir: &Path) -> Result<StackMeta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn decode_f32_le(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect()
}

pub fn encode_f32_le(values: &[f64]) -> Vec<u8> {
    values
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect()
}

pub fn ingest_stack(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let meta = read_meta(dir)?;
    if meta.timestamps.len() != meta.count {
        return Err(Error::Format(format!(
            "meta declares {} frames but lists {} timestamps",
            meta.count,
            meta.timestamps.len()
        )));
    }
    if meta.width == 0 || meta.height == 0 {
        return Err(Error::Format("meta declares a zero-area grid".into()));
    }
    let expected = meta.width * meta.height * 4;
    let mut frames = Vec::with_capacity(meta.count);
    for t in 0..meta.count {
        let path = dir.join(frame_file_name(t));
        let bytes = fs::read(&path)
            .map_err(|e| Error::Format(format!("frame {t} ({}): {e}", path.display())))?;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "frame {t} has {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        frames.push(GridFrame::new(
            meta.width,
            meta.height,
            decode_f32_le(&bytes),
        )?);
    }
    let timestamps = meta
        .timestamps
        .iter()
        .map(|s| parse_timestamp(s))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(meta.id, meta.variable, frames, timestamps, meta.extent)
}

pub fn export_stack(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let meta = StackMeta {
        id: dataset.id().to_string(),
        variable: dataset.variable().to_string(),
        width: dataset.width(),
        height: dataset.height(),
        count: dataset.len(),
        timestamps: dataset.timestamps().iter().map(format_timestamp).collect(),
        extent: dataset.extent(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(dir.join(META_FILE), json)?;
    for (t, frame) in dataset.frames().iter().enumerate() {
        fs::write(dir.join(frame_file_name(t)), encode_f32_le(frame.values()))?;
    }
    Ok(())
}

/// Parses one CSV frame: comma-separated rows, empty or `nan` cells are NaN.
pub fn parse_csv_frame(text: &str) -> Result<GridFrame> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                let cell = cell.trim();
                if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                    Ok(f64::NAN)
                } else {
                    cell.parse::<f64>().map_err(|_| {
                        Error::Format(format!("line {}: `{cell}` is not a number", line_no + 1))
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Format("csv rows have differing lengths".into()));
    }
    let height = rows.len();
    GridFrame::new(width, height, rows.into_iter().flatten().collect())
}

/// Reads every `*.csv` file of `dir` in lexical order as one frame each.
/// An accompanying `meta.json` supplies id/timestamps/extent when present.
pub fn ingest_csv_dir(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mut files: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    let frames = files
        .iter()
        .map(|p| parse_csv_frame(&fs::read_to_string(p)?))
        .collect::<Result<Vec<_>>>()?;
    if dir.join(META_FILE).exists() {
        let meta = read_meta(dir)?;
        if meta.count != frames.len() {
            return Err(Error::Format(format!(
                "meta declares {} frames but {} csv files exist",
                meta.count,
                frames.len()
            )));
        }
        let timestamps = meta
            .timestamps
            .iter()
            .map(|s| parse_timestamp(s))
            .collect::<Result<Vec<_>>>()?;
        return Dataset::new(meta.id, meta.variable, frames, timestamps, meta.extent);
    }
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let timestamps = default_timestamps(frames.len(), TimeDelta::days(1));
    Dataset::new(id, "value", frames, timestamps, DEFAULT_EXTENT)
}

/// Opens a frame-stack directory (with `meta.json`) or a directory of CSV frames.
pub fn open_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    if !path.is_dir() {
        return Err(Error::NotFound(format!(
            "dataset directory {}",
            path.display()
        )));
    }
    let has_csv = fs::read_dir(path)?.filter_map(|e| e.ok()).any(|e| {
        e.path()
            .extension()
            .is_some_and(|x| x.eq_ignore_ascii_case("csv"))
    });
    if has_csv {
        ingest_csv_dir(path)
    } else {
        ingest_stack(path)
    }
}
