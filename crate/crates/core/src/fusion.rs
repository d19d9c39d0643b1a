//! Pseudo-label records and the distance-gated union of LiDAR and image boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::bev_iou;
use crate::geometry::{OrientedBox, Point3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Lidar,
    Image,
    Model,
    /// Human or simulator ground truth.
    Truth,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Label {
    pub bbox: OrientedBox,
    pub source: Source,
    pub confidence: f64,
    pub frame: u32,
}

impl Label {
    pub fn new(bbox: OrientedBox, source: Source, confidence: f64, frame: u32) -> Result<Self> {
        bbox.validate()?;
        if !confidence.is_finite() {
            return Err(Error::Validation("label confidence must be finite".into()));
        }
        Ok(Self {
            bbox,
            source,
            confidence,
            frame,
        })
    }
}

/// Flat on-disk form of a [`Label`], one JSON object per line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRecord {
    pub frame: u32,
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
    pub source: Source,
    pub confidence: f64,
}

impl From<&Label> for LabelRecord {
    fn from(l: &Label) -> Self {
        Self {
            frame: l.frame,
            cx: l.bbox.center.x,
            cy: l.bbox.center.y,
            cz: l.bbox.center.z,
            l: l.bbox.length,
            w: l.bbox.width,
            h: l.bbox.height,
            yaw: l.bbox.yaw,
            source: l.source,
            confidence: l.confidence,
        }
    }
}

impl TryFrom<LabelRecord> for Label {
    type Error = Error;

    fn try_from(r: LabelRecord) -> Result<Self> {
        let bbox = OrientedBox::new(Point3::new(r.cx, r.cy, r.cz), r.l, r.w, r.h, r.yaw)?;
        Label::new(bbox, r.source, r.confidence, r.frame)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionParams {
    /// Image boxes closer than this are dropped.
    pub d_min: f64,
    /// When set, image boxes overlapping a LiDAR box at or above this BEV
    /// IoU are also dropped. Off by default.
    pub suppress_iou: Option<f64>,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            d_min: 10.0,
            suppress_iou: None,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if self.d_min.is_nan() || self.d_min < 0.0 {
            return Err(Error::Config("fusion.d_min must be >= 0".into()));
        }
        if let Some(t) = self.suppress_iou {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Config("fusion.suppress_iou must lie in (0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Ground-plane distance from the ego origin to the box center.
pub fn box_distance(b: &OrientedBox) -> f64 {
    b.center.x.hypot(b.center.y)
}

/// All LiDAR labels plus every image label at least `d_min` away.
pub fn fuse_labels(lidar: &[Label], image: &[Label], params: &FusionParams) -> Result<Vec<Label>> {
    params.validate()?;
    let mut frames = lidar.iter().chain(image).map(|l| l.frame);
    if let Some(first) = frames.next() {
        if let Some(other) = frames.find(|&f| f != first) {
            return Err(Error::Validation(format!(
                "labels from frames {first} and {other} cannot be fused together"
            )));
        }
    }
    let mut out = lidar.to_vec();
    out.extend(image.iter().copied().filter(|l| {
        box_distance(&l.bbox) >= params.d_min
            && params
                .suppress_iou
                .is_none_or(|t| lidar.iter().all(|li| bev_iou(&li.bbox, &l.bbox) < t))
    }));
    Ok(out)
}
