//! Two-nearest-neighbor (TwoNN) intrinsic dimension estimate.
//!
//! For each point the ratio `μ = r2 / r1` of its second to first neighbor
//! distance follows a Pareto law with shape `d`; the maximum-likelihood
//! estimate is `d = n / Σ log μ`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{CemsError, Result};
use crate::neighbors::NeighborIndex;

/// Minimum number of points with a usable distance ratio.
pub const MIN_VALID_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct DimEstimate {
    pub d_real: f64,
    /// `round(d_real)` clamped to `[1, D - 1]`.
    pub d_used: usize,
    pub n_valid: usize,
    pub ratios: Vec<f64>,
}

/// Estimates the intrinsic dimension of the rows of `points`.
///
/// Points whose nearest other row is an exact duplicate, or whose first two
/// neighbor distances are equal, carry no information and are dropped.
pub fn twonn_estimate(points: &DMatrix<f64>) -> Result<DimEstimate> {
    let ambient = points.ncols();
    if ambient < 2 {
        return Err(CemsError::Parameter(format!(
            "intrinsic dimension needs ambient dimension >= 2, got {ambient}"
        )));
    }
    if points.nrows() < 3 {
        return Err(CemsError::Estimation(format!(
            "need at least {MIN_VALID_POINTS} usable points, got {} rows",
            points.nrows()
        )));
    }
    let index = NeighborIndex::build(points)?;
    let ratios: Vec<f64> = (0..index.len())
        .into_par_iter()
        .filter_map(|i| {
            let nn = index.nearest(i, 2);
            let (r1, r2) = (nn[0].1, nn[1].1);
            if r1 > 0.0 && r2 > r1 {
                Some(r2 / r1)
            } else {
                None
            }
        })
        .collect();
    let n_valid = ratios.len();
    if n_valid < MIN_VALID_POINTS {
        return Err(CemsError::Estimation(format!(
            "only {n_valid} points have distinct first and second neighbors, need {MIN_VALID_POINTS}"
        )));
    }
    let log_sum: f64 = ratios.iter().map(|m| m.ln()).sum();
    let d_real = n_valid as f64 / log_sum;
    let d_used = round_and_cap(d_real, ambient);
    Ok(DimEstimate {
        d_real,
        d_used,
        n_valid,
        ratios,
    })
}

/// Round half up, then clamp to `[1, ambient - 1]`.
pub fn round_and_cap(d_real: f64, ambient: usize) -> usize {
    let rounded = (d_real + 0.5).floor();
    let cap = ambient.saturating_sub(1).max(1);
    (rounded.max(1.0) as usize).min(cap)
}
