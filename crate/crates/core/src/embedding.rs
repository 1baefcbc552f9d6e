//! Deterministic 2D projection of latent codes for the latent-space view.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::LatentCode;

pub const DISPLAY_CAP: usize = 500;

/// Eigenvalues below this fraction of the largest are treated as zero.
const RELATIVE_EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedPoint {
    pub frame: usize,
    pub x: f64,
    pub y: f64,
    pub salient: bool,
    pub sampled_out: bool,
}

/// Projects mean-centred codes onto their two leading principal axes.
///
/// Each axis is oriented so its largest-magnitude loading is positive, and the
/// result is scaled uniformly to fit `[-1, 1]²`. Point `i` gets `frame = i`.
pub fn project_2d(codes: &[LatentCode]) -> Result<Vec<EmbeddedPoint>> {
    let n = codes.len();
    if n < 3 {
        return Err(Error::Bounds(format!(
            "projection needs at least 3 codes, got {n}"
        )));
    }
    let d = codes[0].dims();
    if let Some(c) = codes.iter().find(|c| c.dims() != d) {
        return Err(Error::InvalidCode(format!(
            "code of {} dims among {d}-dim codes",
            c.dims()
        )));
    }
    let mut data = DMatrix::from_fn(n, d, |i, j| codes[i].values()[j]);
    let mean = data.row_mean();
    for mut row in data.row_iter_mut() {
        row -= &mean;
    }

    // Loadings (unit vectors in code space) and their variances, largest first.
    let axes: Vec<(f64, DVector<f64>)> = if n <= d {
        let gram = &data * data.transpose();
        leading_pairs(gram)
            .into_iter()
            .map(|(lambda, u)| {
                let v = data.transpose() * u;
                let norm = v.norm();
                let v = if norm > 0.0 { v / norm } else { v };
                (lambda, v)
            })
            .collect()
    } else {
        leading_pairs(data.transpose() * &data)
    };

    let top = axes[0].0;
    let mut coords = vec![[0.0f64; 2]; n];
    for (axis, (lambda, loading)) in axes.iter().enumerate() {
        if top.is_nan() || top <= 0.0 || *lambda <= RELATIVE_EIGEN_FLOOR * top {
            continue;
        }
        let sign = orientation(loading);
        let scores = &data * loading;
        for (c, s) in coords.iter_mut().zip(scores.iter()) {
            c[axis] = sign * s;
        }
    }

    let extent = coords
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(coords
        .into_iter()
        .enumerate()
        .map(|(frame, [x, y])| {
            let (x, y) = if extent > 0.0 {
                (x / extent, y / extent)
            } else {
                (0.0, 0.0)
            };
            EmbeddedPoint {
                frame,
                x,
                y,
                salient: false,
                sampled_out: false,
            }
        })
        .collect())
}

/// The two largest eigenpairs of a symmetric matrix, eigenvalues clamped at 0.
fn leading_pairs(matrix: DMatrix<f64>) -> Vec<(f64, DVector<f64>)> {
    let eig = SymmetricEigen::new(matrix);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .take(2)
        .map(|i| {
            (
                eig.eigenvalues[i].max(0.0),
                eig.eigenvectors.column(i).into_owned(),
            )
        })
        .collect()
}

/// `+1` when the first largest-magnitude component is positive.
fn orientation(loading: &DVector<f64>) -> f64 {
    let mut best = 0.0f64;
    for &v in loading.iter() {
        if v.abs() > best.abs() {
            best = v;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Marks salient points and thins the rest to an even stride when there are
/// more than `cap` points. Salient points are always retained.
pub fn sample_for_display(
    points: &[EmbeddedPoint],
    salient: &BTreeSet<usize>,
    cap: usize,
) -> Vec<EmbeddedPoint> {
    let stride = if points.len() > cap && cap > 0 {
        points.len().div_ceil(cap)
    } else {
        1
    };
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let is_salient = salient.contains(&p.frame);
            EmbeddedPoint {
                salient: is_salient,
                sampled_out: !is_salient && i % stride != 0,
                ..*p
            }
        })
        .collect()
}
