//! Structural feature codes and the structural cost.
//!
//! Codes come from one of two sources: the built-in multi-scale pyramid
//! descriptor, or an external encoder whose output is imported through the
//! latent-code file format (`u32 count`, `u32 dim`, then `count * dim` `f32`,
//! all little-endian).

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{crop, fill_nan, normalize, Dataset, GridFrame, Region};

/// Feature vector describing one frame's spatial structure.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    values: Vec<f64>,
}

impl LatentCode {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidCode("code has no dimensions".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCode(
                "code contains non-finite entries".into(),
            ));
        }
        let code = Self { values };
        if code.norm() == 0.0 {
            return Err(Error::InvalidCode("code has zero norm".into()));
        }
        Ok(code)
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DescriptorConfig {
    /// Side of the square grid every frame is resampled onto.
    pub base_size: usize,
    pub levels: usize,
    /// Cells per side of the grid each level is pooled onto.
    pub cells: usize,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            base_size: 256,
            levels: 8,
            cells: 8,
        }
    }
}

impl DescriptorConfig {
    pub fn dims(&self) -> usize {
        self.levels * self.cells * self.cells
    }
}

/// Multi-scale descriptor of a normalized, NaN-free frame.
///
/// The frame is area-resampled to `base_size²`, halved `levels` times by mean
/// pooling, and each level is adaptively pooled onto a `cells²` grid. Levels
/// smaller than the cell grid replicate their values across cells. The code
/// is the concatenation of the level grids, finest first.
pub fn pyramid_descriptor(frame: &GridFrame, cfg: &DescriptorConfig) -> Result<LatentCode> {
    if cfg.levels == 0 || cfg.cells == 0 || cfg.base_size == 0 {
        return Err(Error::Bounds(format!(
            "descriptor config {cfg:?} has a zero size"
        )));
    }
    let mut level = area_resample(frame, cfg.base_size);
    let mut side = cfg.base_size;
    let mut code = Vec::with_capacity(cfg.dims());
    for _ in 0..cfg.levels {
        let next = (side / 2).max(1);
        level = adaptive_mean_pool(&level, side, next);
        side = next;
        code.extend(adaptive_mean_pool(&level, side, cfg.cells));
    }
    if code.iter().all(|&v| v == 0.0) {
        // Blank frames get a uniform code so cosine similarity stays defined.
        code.iter_mut().for_each(|v| *v = f64::EPSILON);
    }
    LatentCode::new(code)
}

/// Overlap weights mapping `n` input cells onto `m` output cells.
fn area_weights(n: usize, m: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n as f64 / m as f64;
    (0..m)
        .map(|i| {
            let (lo, hi) = (i as f64 * scale, (i + 1) as f64 * scale);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(n);
            (first..last)
                .filter_map(|j| {
                    let overlap = hi.min((j + 1) as f64) - lo.max(j as f64);
                    (overlap > 0.0).then_some((j, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// Area-mean resample to a `size × size` grid (separable; exact overlaps).
fn area_resample(frame: &GridFrame, size: usize) -> Vec<f64> {
    let (w, h) = (frame.width(), frame.height());
    let src = frame.values();
    if w == size && h == size {
        return src.to_vec();
    }
    let wx = area_weights(w, size);
    let wy = area_weights(h, size);
    let mut rows = vec![0.0; size * h];
    for y in 0..h {
        for (i, ws) in wx.iter().enumerate() {
            rows[y * size + i] = ws.iter().map(|&(j, wt)| wt * src[y * w + j]).sum();
        }
    }
    let mut out = vec![0.0; size * size];
    for (i, ws) in wy.iter().enumerate() {
        for x in 0..size {
            out[i * size + x] = ws.iter().map(|&(j, wt)| wt * rows[j * size + x]).sum();
        }
    }
    out
}

/// Adaptive average pooling of a square grid, block bounds
/// `[floor(i·n/m), ceil((i+1)·n/m))`; replicates when `m > n`.
fn adaptive_mean_pool(src: &[f64], n: usize, m: usize) -> Vec<f64> {
    let bounds: Vec<(usize, usize)> = (0..m)
        .map(|i| (i * n / m, ((i + 1) * n).div_ceil(m)))
        .collect();
    let mut out = Vec::with_capacity(m * m);
    for &(y0, y1) in &bounds {
        for &(x0, x1) in &bounds {
            let mut sum = 0.0;
            for y in y0..y1 {
                sum += src[y * n + x0..y * n + x1].iter().sum::<f64>();
            }
            out.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    out
}

/// Descriptor codes for every frame of `dataset` inside `region`, using the
/// dataset-wide normalization and zero-filling NaN cells.
pub fn dataset_codes(
    dataset: &Dataset,
    region: Option<&Region>,
    cfg: &DescriptorConfig,
) -> Result<Vec<LatentCode>> {
    let region = dataset.resolve_region(region)?;
    let norm = dataset.norm();
    dataset
        .frames()
        .par_iter()
        .map(|f| {
            let prepared = fill_nan(&normalize(&crop(f, &region)?, &norm), 0.0);
            pyramid_descriptor(&prepared, cfg)
        })
        .collect()
}

pub fn decode_latent_codes(bytes: &[u8]) -> Result<Vec<LatentCode>> {
    if bytes.len() < 8 {
        return Err(Error::Format(
            "latent-code file shorter than its header".into(),
        ));
    }
    let count = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    let dim = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    if dim == 0 {
        return Err(Error::Format(
            "latent-code header declares zero dimensions".into(),
        ));
    }
    let body = &bytes[8..];
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("latent-code header overflows".into()))?;
    if body.len() != expected {
        return Err(Error::Format(format!(
            "header declares {count}x{dim} floats ({expected} bytes) but body has {} bytes",
            body.len()
        )));
    }
    body.chunks_exact(dim * 4)
        .enumerate()
        .map(|(row, chunk)| {
            let values = chunk
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect();
            LatentCode::new(values).map_err(|e| match e {
                Error::InvalidCode(msg) => Error::InvalidCode(format!("row {row}: {msg}")),
                other => other,
            })
        })
        .collect()
}

pub fn encode_latent_codes(codes: &[LatentCode]) -> Result<Vec<u8>> {
    let dim = codes.first().map_or(0, LatentCode::dims);
    if codes.iter().any(|c| c.dims() != dim) {
        return Err(Error::Format("codes have differing dimensions".into()));
    }
    let mut out = Vec::with_capacity(8 + codes.len() * dim * 4);
    out.extend_from_slice(&(codes.len() as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for c in codes {
        out.extend(c.values().iter().flat_map(|&v| (v as f32).to_le_bytes()));
    }
    Ok(out)
}

pub fn load_latent_codes(path: impl AsRef<Path>) -> Result<Vec<LatentCode>> {
    decode_latent_codes(&fs::read(path)?)
}

pub fn write_latent_codes(path: impl AsRef<Path>, codes: &[LatentCode]) -> Result<()> {
    fs::write(path, encode_latent_codes(codes)?)?;
    Ok(())
}

pub fn cosine_similarity(a: &LatentCode, b: &LatentCode) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::InvalidCode(format!(
            "cannot compare codes of {} and {} dimensions",
            a.dims(),
            b.dims()
        )));
    }
    Ok(unit_dot(a.values(), b.values(), a.norm(), b.norm()))
}

#[inline]
fn unit_dot(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Sigmoid mapping of a cosine similarity onto (0, 1); similar frames cost more.
#[inline]
pub fn similarity_cost(similarity: f64) -> f64 {
    1.0 / (1.0 + (-5.0 * (similarity - 0.5)).exp())
}

pub fn structural_cost(a: &LatentCode, b: &LatentCode) -> Result<f64> {
    Ok(similarity_cost(cosine_similarity(a, b)?))
}

/// Dense symmetric matrix of pairwise structural costs.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralMatrix {
    n: usize,
    values: Vec<f64>,
}

impl StructuralMatrix {
    pub fn from_codes(codes: &[LatentCode]) -> Result<Self> {
        let n = codes.len();
        let dim = codes.first().map_or(0, LatentCode::dims);
        if let Some(bad) = codes.iter().position(|c| c.dims() != dim) {
            return Err(Error::InvalidCode(format!(
                "code {bad} has {} dimensions, expected {dim}",
                codes[bad].dims()
            )));
        }
        let norms: Vec<f64> = codes.iter().map(LatentCode::norm).collect();
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (i + 1..n)
                    .map(|j| {
                        let s = unit_dot(codes[i].values(), codes[j].values(), norms[i], norms[j]);
                        similarity_cost(s)
                    })
                    .collect()
            })
            .collect();
        let mut values = vec![0.0; n * n];
        let diagonal = similarity_cost(1.0);
        for (i, row) in upper.iter().enumerate() {
            values[i * n + i] = diagonal;
            for (off, &c) in row.iter().enumerate() {
                let j = i + 1 + off;
                values[i * n + j] = c;
                values[j * n + i] = c;
            }
        }
        Ok(Self { n, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn size_bytes(&self) -> usize {
        self.values.len() * std::mem::size_of::<f64>()
    }
}
