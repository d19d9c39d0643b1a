//! Lifting 2D instance masks to 3D boxes through the LiDAR cloud.
//!
//! Points are projected with the camera model, those landing on the mask
//! form the frustum, the largest Euclidean-connected group inside the
//! frustum is taken as the object, and a tight box is fitted to it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxfit::{fit_box, FitParams};
use crate::error::{Error, Result};
use crate::fusion::{Label, Source};
use crate::geometry::{CameraModel, OrientedBox, PointCloud};
use crate::spatial::{DisjointSet, VoxelGrid};

/// Binary instance mask stored as sorted, disjoint row-major pixel runs.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask2D {
    width: u32,
    height: u32,
    runs: Vec<(u64, u64)>,
    pub label: Option<String>,
    pub confidence: Option<f64>,
}

impl Mask2D {
    /// `rle` is a flat `[start, len, start, len, ..]` list of 0-based
    /// row-major pixel runs.
    pub fn from_rle(width: u32, height: u32, rle: &[u64]) -> Result<Self> {
        if !rle.len().is_multiple_of(2) {
            return Err(Error::Validation("mask RLE must hold start/len pairs".into()));
        }
        let total = width as u64 * height as u64;
        let mut runs: Vec<(u64, u64)> = Vec::with_capacity(rle.len() / 2);
        for pair in rle.chunks_exact(2) {
            let (start, len) = (pair[0], pair[1]);
            if len == 0 {
                continue;
            }
            if start.checked_add(len).is_none_or(|end| end > total) {
                return Err(Error::Validation(format!(
                    "mask run {start}+{len} exceeds {width}x{height} image"
                )));
            }
            runs.push((start, len));
        }
        runs.sort_unstable();
        let mut merged: Vec<(u64, u64)> = Vec::with_capacity(runs.len());
        for (s, l) in runs {
            match merged.last_mut() {
                Some((ps, pl)) if s <= *ps + *pl => *pl = (*pl).max(s + l - *ps),
                _ => merged.push((s, l)),
            }
        }
        if merged.is_empty() {
            return Err(Error::Validation("mask has no foreground pixels".into()));
        }
        Ok(Self {
            width,
            height,
            runs: merged,
            label: None,
            confidence: None,
        })
    }

    /// Build from a per-pixel predicate evaluated in row-major order.
    pub fn from_fn(width: u32, height: u32, mut on: impl FnMut(u32, u32) -> bool) -> Result<Self> {
        let mut rle = Vec::new();
        let mut open: Option<u64> = None;
        for v in 0..height {
            for u in 0..width {
                let idx = v as u64 * width as u64 + u as u64;
                match (on(u, v), open) {
                    (true, None) => open = Some(idx),
                    (false, Some(s)) => {
                        rle.extend([s, idx - s]);
                        open = None;
                    }
                    _ => {}
                }
            }
        }
        if let Some(s) = open {
            rle.extend([s, width as u64 * height as u64 - s]);
        }
        Self::from_rle(width, height, &rle)
    }

    pub fn with_meta(mut self, label: Option<String>, confidence: Option<f64>) -> Self {
        self.label = label;
        self.confidence = confidence;
        self
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn to_rle(&self) -> Vec<u64> {
        self.runs.iter().flat_map(|&(s, l)| [s, l]).collect()
    }

    pub fn area(&self) -> u64 {
        self.runs.iter().map(|r| r.1).sum()
    }

    pub fn contains(&self, u: u32, v: u32) -> bool {
        if u >= self.width || v >= self.height {
            return false;
        }
        let idx = v as u64 * self.width as u64 + u as u64;
        let pos = self.runs.partition_point(|&(s, _)| s <= idx);
        pos > 0 && {
            let (s, l) = self.runs[pos - 1];
            idx < s + l
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiftParams {
    pub grow_radius: f64,
    pub min_cluster: usize,
    pub min_depth: f64,
}

impl Default for LiftParams {
    fn default() -> Self {
        Self {
            grow_radius: 0.5,
            min_cluster: 5,
            min_depth: 0.1,
        }
    }
}

impl LiftParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.grow_radius > 0.0 && self.grow_radius.is_finite()) {
            return Err(Error::Config("lift.grow_radius must be > 0".into()));
        }
        if self.min_cluster < 3 {
            return Err(Error::Config("lift.min_cluster must be >= 3".into()));
        }
        if !self.min_depth.is_finite() {
            return Err(Error::Config("lift.min_depth must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    pub valid: bool,
}

impl Projection {
    pub fn pixel(&self) -> (i64, i64) {
        (self.u.round() as i64, self.v.round() as i64)
    }
}

/// Projections of one cloud into one image.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedCloud {
    pub width: u32,
    pub height: u32,
    pub points: Vec<Projection>,
}

/// Pinhole projection `K · E · p` with perspective division. A projection is
/// valid when its depth exceeds `min_depth` and its rounded pixel lies in
/// the image.
pub fn project_points(cloud: &PointCloud, camera: &CameraModel, min_depth: f64) -> Result<ProjectedCloud> {
    camera.validate()?;
    cloud.validate()?;
    let k = camera.intrinsic;
    let (w, h) = (camera.width as i64, camera.height as i64);
    let points = cloud
        .points
        .iter()
        .map(|p| {
            let cam = camera.extrinsic.apply(p);
            let img = k * cam.coords;
            let depth = img.z;
            let (u, v) = (img.x / depth, img.y / depth);
            let (pu, pv) = (u.round(), v.round());
            let valid = depth > min_depth
                && u.is_finite()
                && v.is_finite()
                && (0.0..w as f64).contains(&pu)
                && (0.0..h as f64).contains(&pv);
            Projection { u, v, depth, valid }
        })
        .collect();
    Ok(ProjectedCloud {
        width: camera.width,
        height: camera.height,
        points,
    })
}

/// Indices of valid projections whose rounded pixel is on the mask.
pub fn points_in_mask(projections: &ProjectedCloud, mask: &Mask2D) -> Result<Vec<usize>> {
    if projections.width != mask.width || projections.height != mask.height {
        return Err(Error::Validation(format!(
            "mask is {}x{} but image is {}x{}",
            mask.width, mask.height, projections.width, projections.height
        )));
    }
    Ok(projections
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            p.valid && {
                let (u, v) = p.pixel();
                mask.contains(u as u32, v as u32)
            }
        })
        .map(|(i, _)| i)
        .collect())
}

/// Largest group of points connected by hops of at most `grow_radius`.
/// Ties go to the group holding the smallest index. Indices are ascending.
pub fn region_grow(points: &PointCloud, grow_radius: f64) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::EmptyFrustum);
    }
    let grid = VoxelGrid::new(&points.points, grow_radius);
    let mut sets = DisjointSet::new(points.len());
    for (i, p) in points.points.iter().enumerate() {
        grid.for_each_within(p, grow_radius, |j| {
            if j > i {
                sets.union(i, j);
            }
        });
    }
    let roots: Vec<usize> = (0..points.len()).map(|i| sets.find(i)).collect();
    let mut size = vec![0usize; points.len()];
    for &r in &roots {
        size[r] += 1;
    }
    // First index wins ties because it is visited first.
    let mut best_root = roots[0];
    for &r in &roots {
        if size[r] > size[best_root] {
            best_root = r;
        }
    }
    Ok((0..points.len()).filter(|&i| roots[i] == best_root).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiftedBox {
    pub bbox: OrientedBox,
    /// Indices into the input cloud of the points the box was fitted to.
    pub support: Vec<usize>,
}

/// Frustum selection, region growing and box fitting for one mask.
/// `None` when the frustum is empty or its dominant group is too small.
pub fn lift_mask_to_box(
    cloud: &PointCloud,
    camera: &CameraModel,
    mask: &Mask2D,
    params: &LiftParams,
    fit: &FitParams,
) -> Result<Option<LiftedBox>> {
    params.validate()?;
    let projections = project_points(cloud, camera, params.min_depth)?;
    lift_projected(cloud, &projections, mask, params, fit)
}

fn lift_projected(
    cloud: &PointCloud,
    projections: &ProjectedCloud,
    mask: &Mask2D,
    params: &LiftParams,
    fit: &FitParams,
) -> Result<Option<LiftedBox>> {
    let frustum = points_in_mask(projections, mask)?;
    let frustum_cloud = cloud.select(&frustum);
    let grown = match region_grow(&frustum_cloud, params.grow_radius) {
        Ok(g) => g,
        Err(Error::EmptyFrustum) => return Ok(None),
        Err(e) => return Err(e),
    };
    if grown.len() < params.min_cluster {
        return Ok(None);
    }
    let support: Vec<usize> = grown.iter().map(|&i| frustum[i]).collect();
    match fit_box(&cloud.select(&support), fit) {
        Ok(f) => Ok(Some(LiftedBox { bbox: f.bbox, support })),
        Err(Error::TooFewPoints { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Image-derived labels for one frame, in mask order. Each label carries
/// its mask's detector confidence, or 1.0 when the mask has none.
pub fn lift_frame(
    cloud: &PointCloud,
    camera: &CameraModel,
    masks: &[Mask2D],
    params: &LiftParams,
    fit: &FitParams,
    frame: u32,
) -> Result<Vec<Label>> {
    params.validate()?;
    let projections = project_points(cloud, camera, params.min_depth)?;
    let lifted: Vec<Option<Label>> = masks
        .par_iter()
        .map(|mask| {
            let Some(lb) = lift_projected(cloud, &projections, mask, params, fit)? else {
                return Ok(None);
            };
            Label::new(lb.bbox, Source::Image, mask.confidence.unwrap_or(1.0), frame).map(Some)
        })
        .collect::<Result<_>>()?;
    Ok(lifted.into_iter().flatten().collect())
}
