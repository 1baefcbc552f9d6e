//! Deterministic synthetic datasets for tests and benchmarks.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use chrono::TimeDelta;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Dataset, GridFrame};
use crate::store::default_timestamps;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Spatially constant frames whose value rises linearly from 0 to 1.
    Ramp,
    /// One repeated base frame, replaced by a distinct pattern at burst indices.
    Burst,
    /// A Gaussian blob travelling around a circle.
    Blob,
    /// A fixed spatial pattern modulated by a sinusoid, plus uniform noise.
    Seasonal,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Ramp => "ramp",
            Family::Burst => "burst",
            Family::Blob => "blob",
            Family::Seasonal => "seasonal",
        };
        f.write_str(s)
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ramp" => Ok(Family::Ramp),
            "burst" => Ok(Family::Burst),
            "blob" => Ok(Family::Blob),
            "seasonal" => Ok(Family::Seasonal),
            other => Err(Error::Format(format!("unknown synthetic family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub family: Family,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Burst indices (burst family only).
    #[serde(default)]
    pub bursts: Vec<usize>,
    /// Cycle length in frames (seasonal family only).
    #[serde(default = "default_period")]
    pub period: usize,
}

fn default_period() -> usize {
    12
}

impl SyntheticSpec {
    pub fn new(family: Family, frames: usize, width: usize, height: usize, seed: u64) -> Self {
        Self {
            family,
            frames,
            width,
            height,
            seed,
            bursts: Vec::new(),
            period: default_period(),
        }
    }

    pub fn with_bursts(mut self, bursts: impl Into<Vec<usize>>) -> Self {
        self.bursts = bursts.into();
        self
    }

    pub fn with_period(mut self, period: usize) -> Self {
        self.period = period;
        self
    }
}

pub fn synthesize(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.frames == 0 {
        return Err(Error::EmptyData(
            "synthetic dataset needs at least one frame".into(),
        ));
    }
    if spec.width == 0 || spec.height == 0 {
        return Err(Error::Bounds(
            "synthetic frame size must be non-zero".into(),
        ));
    }
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let frames = match spec.family {
        Family::Ramp => {
            let denom = (spec.frames.max(2) - 1) as f64;
            (0..spec.frames)
                .map(|i| GridFrame::filled(w, h, i as f64 / denom))
                .collect::<Result<Vec<_>>>()?
        }
        Family::Burst => {
            if let Some(&b) = spec.bursts.iter().find(|&&b| b >= spec.frames) {
                return Err(Error::Bounds(format!(
                    "burst index {b} beyond {} frames",
                    spec.frames
                )));
            }
            let phase = (rng.random::<f64>() * TAU, rng.random::<f64>() * TAU);
            let base = field(w, h, |x, y| {
                0.5 + 0.3 * (TAU * x + phase.0).sin() * (TAU * y + phase.1).cos()
            });
            let hot = (
                0.2 + 0.6 * rng.random::<f64>(),
                0.2 + 0.6 * rng.random::<f64>(),
            );
            let burst = field(w, h, |x, y| {
                let r2 = (x - hot.0).powi(2) + (y - hot.1).powi(2);
                0.05 + 0.95 * (-r2 / (2.0 * 0.08f64.powi(2))).exp()
            });
            (0..spec.frames)
                .map(|i| {
                    let src = if spec.bursts.contains(&i) {
                        &burst
                    } else {
                        &base
                    };
                    GridFrame::new(w, h, src.clone())
                })
                .collect::<Result<Vec<_>>>()?
        }
        Family::Blob => {
            let phase = rng.random::<f64>() * TAU;
            let sigma = 0.12;
            (0..spec.frames)
                .map(|i| {
                    let a = phase + TAU * i as f64 / spec.frames as f64;
                    let (cx, cy) = (0.5 + 0.3 * a.cos(), 0.5 + 0.3 * a.sin());
                    let values = field(w, h, |x, y| {
                        let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                        (-r2 / (2.0 * sigma * sigma)).exp()
                    });
                    GridFrame::new(w, h, values)
                })
                .collect::<Result<Vec<_>>>()?
        }
        Family::Seasonal => {
            let period = spec.period.max(2) as f64;
            let pattern = field(w, h, |x, y| 1.0 + x + 0.5 * (TAU * y).sin());
            (0..spec.frames)
                .map(|i| {
                    let season = 1.0 + 0.5 * (TAU * i as f64 / period).sin();
                    let values = pattern
                        .iter()
                        .map(|p| p * season + 0.05 * (2.0 * rng.random::<f64>() - 1.0))
                        .collect();
                    GridFrame::new(w, h, values)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let timestamps = default_timestamps(spec.frames, TimeDelta::hours(1));
    Dataset::new(
        format!("{}-{}", spec.family, spec.seed),
        "synthetic",
        frames,
        timestamps,
        [-180.0, -90.0, 180.0, 90.0],
    )
}

/// Samples `f` at cell centres in unit coordinates.
fn field(w: usize, h: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            out.push(f((x as f64 + 0.5) / w as f64, (y as f64 + 0.5) / h as f64));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_frames_are_constant() {
        let ds = synthesize(&SyntheticSpec::new(Family::Ramp, 10, 8, 8, 0)).unwrap();
        for (i, f) in ds.frames().iter().enumerate() {
            assert!(f.values().iter().all(|&v| v == i as f64 / 9.0));
        }
    }

    #[test]
    fn burst_only_changes_declared_frames() {
        let ds = synthesize(&SyntheticSpec::new(Family::Burst, 10, 8, 8, 3).with_bursts(vec![5]))
            .unwrap();
        let f = ds.frames();
        for i in [1, 2, 3, 4, 6, 7, 8, 9] {
            assert_eq!(f[i], f[0]);
        }
        assert_ne!(f[5], f[0]);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        for family in [Family::Ramp, Family::Burst, Family::Blob, Family::Seasonal] {
            let spec = SyntheticSpec::new(family, 6, 5, 4, 42).with_bursts(vec![2]);
            let a = synthesize(&spec).unwrap();
            let b = synthesize(&spec).unwrap();
            let bits = |d: &Dataset| -> Vec<u64> {
                d.frames()
                    .iter()
                    .flat_map(|f| f.values().iter().map(|v| v.to_bits()))
                    .collect()
            };
            assert_eq!(bits(&a), bits(&b), "{family}");
        }
    }

    #[test]
    fn burst_index_out_of_range() {
        let spec = SyntheticSpec::new(Family::Burst, 4, 2, 2, 0).with_bursts(vec![4]);
        assert!(synthesize(&spec).is_err());
    }
}
