//! Per-point persistency scores from repeated traversals of one place.
//!
//! A point is counted against every traversal: `N_t` is the number of points
//! of traversal `t` within `neighbor_radius`. The score is the entropy of the
//! smoothed distribution `P_t = (N_t + ε) / Σ_j (N_j + ε)` normalized by
//! `ln T`, so a point seen equally in every pass scores 1 (static) and a
//! point seen in a single pass scores near 0 (moved).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::spatial::VoxelGrid;

/// At least two non-empty traversals, all in one common frame.
#[derive(Clone, Debug)]
pub struct TraversalSet {
    traversals: Vec<PointCloud>,
}

impl TraversalSet {
    pub fn new(traversals: Vec<PointCloud>) -> Result<Self> {
        if traversals.len() < 2 {
            return Err(Error::Config(format!(
                "persistency needs at least 2 traversals, got {}",
                traversals.len()
            )));
        }
        for (t, cloud) in traversals.iter().enumerate() {
            if cloud.is_empty() {
                return Err(Error::Validation(format!("traversal {t} is empty")));
            }
            cloud.validate()?;
        }
        Ok(Self { traversals })
    }

    pub fn len(&self) -> usize {
        self.traversals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traversals.is_empty()
    }

    pub fn clouds(&self) -> &[PointCloud] {
        &self.traversals
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PersistencyParams {
    pub neighbor_radius: f64,
    pub smoothing: f64,
}

impl Default for PersistencyParams {
    fn default() -> Self {
        Self {
            neighbor_radius: 0.3,
            smoothing: 1.0,
        }
    }
}

impl PersistencyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.neighbor_radius > 0.0 && self.neighbor_radius.is_finite()) {
            return Err(Error::Config("persistency.neighbor_radius must be > 0".into()));
        }
        if !(self.smoothing > 0.0 && self.smoothing.is_finite()) {
            return Err(Error::Config("persistency.smoothing must be > 0".into()));
        }
        Ok(())
    }
}

/// Row `i` holds `N_t` for query point `i`, one entry per traversal.
pub fn neighbor_counts(
    query: &PointCloud,
    traversals: &TraversalSet,
    params: &PersistencyParams,
) -> Result<Vec<Vec<u32>>> {
    params.validate()?;
    query.validate()?;
    let r = params.neighbor_radius;
    let grids: Vec<VoxelGrid<'_>> = traversals
        .clouds()
        .iter()
        .map(|c| VoxelGrid::new(&c.points, r))
        .collect();
    Ok(query
        .points
        .par_iter()
        .map(|p| grids.iter().map(|g| g.count_within(p, r) as u32).collect())
        .collect())
}

/// Normalized neighbor-count entropy in `[0, 1]`.
pub fn ppscore(counts: &[u32], traversals: usize, smoothing: f64) -> Result<f64> {
    if traversals < 2 {
        return Err(Error::Config(format!(
            "persistency needs at least 2 traversals, got {traversals}"
        )));
    }
    if counts.len() != traversals {
        return Err(Error::Validation(format!(
            "expected {traversals} counts, got {}",
            counts.len()
        )));
    }
    if !(smoothing > 0.0) {
        return Err(Error::Config("smoothing must be > 0".into()));
    }
    let total: f64 = counts.iter().map(|&n| n as f64 + smoothing).sum();
    let entropy: f64 = counts
        .iter()
        .map(|&n| {
            let p = (n as f64 + smoothing) / total;
            -p * p.ln()
        })
        .sum();
    Ok((entropy / (traversals as f64).ln()).clamp(0.0, 1.0))
}

/// Score every point of `query` against `traversals`; returns `query` with
/// its `scores` filled.
pub fn score_cloud(query: &PointCloud, traversals: &TraversalSet, params: &PersistencyParams) -> Result<PointCloud> {
    let counts = neighbor_counts(query, traversals, params)?;
    let t = traversals.len();
    let scores = counts
        .iter()
        .map(|c| ppscore(c, t, params.smoothing))
        .collect::<Result<Vec<_>>>()?;
    PointCloud::with_scores(query.points.clone(), scores)
}
