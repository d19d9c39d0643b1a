//! Value types shared by every stage: points, clouds, poses, cameras and
//! yaw-oriented boxes.
//!
//! The world frame is right-handed with z up. Each frame's ego sensor sits at
//! the origin of its world-aligned coordinates, so every distance in the
//! pipeline is measured from `(0, 0)` in the ground plane.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Matrix4, Point2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type BevPoint = Point2<f64>;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Ordered points with an optional parallel vector of persistency scores.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub scores: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self { points, scores: None }
    }

    pub fn with_scores(points: Vec<Point3>, scores: Vec<f64>) -> Result<Self> {
        if points.len() != scores.len() {
            return Err(Error::Validation(format!(
                "{} points but {} scores",
                points.len(),
                scores.len()
            )));
        }
        Ok(Self {
            points,
            scores: Some(scores),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Fails with the index of the first non-finite coordinate.
    pub fn validate(&self) -> Result<()> {
        if let Some(index) = self.points.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinitePoint { index });
        }
        if let Some(scores) = &self.scores {
            if scores.len() != self.points.len() {
                return Err(Error::Validation(format!(
                    "{} points but {} scores",
                    self.points.len(),
                    scores.len()
                )));
            }
        }
        Ok(())
    }

    /// Copy of the points at `indices`, scores included when present.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            scores: self.scores.as_ref().map(|s| indices.iter().map(|&i| s[i]).collect()),
        }
    }
}

/// Rigid transform `p ↦ R·p + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = Self { rotation, translation };
        pose.validate()?;
        Ok(pose)
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    /// Rotation about +z by `yaw` followed by a translation.
    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        let (s, c) = yaw.sin_cos();
        Self {
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self
            .rotation
            .iter()
            .chain(self.translation.iter())
            .all(|v| v.is_finite())
        {
            return Err(Error::Validation("pose has non-finite entries".into()));
        }
        let gram = self.rotation.transpose() * self.rotation;
        let off = (gram - Matrix3::identity()).abs().max();
        if off > ORTHONORMAL_TOL {
            return Err(Error::Validation(format!(
                "pose rotation is not orthonormal (max deviation {off:e})"
            )));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::Validation(format!(
                "pose rotation determinant is {det}, expected +1"
            )));
        }
        Ok(())
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::Validation(format!(
                "homogeneous pose must end in [0, 0, 0, 1], got {bottom:?}"
            )));
        }
        Pose::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn to_rows(&self) -> [[f64; 4]; 4] {
        let m = self.to_matrix();
        std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
    }

    pub fn from_rows(rows: &[[f64; 4]; 4]) -> Result<Self> {
        Pose::from_matrix(&Matrix4::from_fn(|r, c| rows[r][c]))
    }
}

/// Apply `pose` to every point. Scores are carried through unchanged.
pub fn transform_to_world(cloud: &PointCloud, pose: &Pose) -> Result<PointCloud> {
    pose.validate()?;
    cloud.validate()?;
    Ok(PointCloud {
        points: cloud.points.iter().map(|p| pose.apply(p)).collect(),
        scores: cloud.scores.clone(),
    })
}

/// Pinhole camera: `intrinsic` maps camera-frame rays to pixels and
/// `extrinsic` maps world points into the camera frame (z forward).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraModel {
    pub intrinsic: Matrix3<f64>,
    pub extrinsic: Pose,
    pub width: u32,
    pub height: u32,
}

impl CameraModel {
    pub fn new(intrinsic: Matrix3<f64>, extrinsic: Pose, width: u32, height: u32) -> Result<Self> {
        let cam = Self {
            intrinsic,
            extrinsic,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn pinhole(focal: f64, cx: f64, cy: f64, extrinsic: Pose, width: u32, height: u32) -> Result<Self> {
        Self::new(
            Matrix3::new(focal, 0.0, cx, 0.0, focal, cy, 0.0, 0.0, 1.0),
            extrinsic,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsic;
        if !k.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("intrinsic has non-finite entries".into()));
        }
        if k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 {
            return Err(Error::Validation("focal lengths must be positive".into()));
        }
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
            return Err(Error::Validation("intrinsic must be upper triangular".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation("image size must be positive".into()));
        }
        self.extrinsic.validate()
    }
}

/// Map a yaw angle into `[-π/2, π/2)`; boxes are symmetric under `yaw ± π`.
pub fn normalize_half_turn(yaw: f64) -> f64 {
    let y = yaw - PI * ((yaw + FRAC_PI_2) / PI).floor();
    if y >= FRAC_PI_2 {
        y - PI
    } else {
        y
    }
}

/// A yaw-only 3D box. `length` runs along the heading, `width` across it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Point3,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
}

impl OrientedBox {
    pub fn new(center: Point3, length: f64, width: f64, height: f64, yaw: f64) -> Result<Self> {
        let b = Self {
            center,
            length,
            width,
            height,
            yaw,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.center.coords.iter().all(|v| v.is_finite())
            && self.yaw.is_finite()
            && [self.length, self.width, self.height].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Validation("box has non-finite fields".into()));
        }
        if self.length <= 0.0 || self.width <= 0.0 || self.height <= 0.0 {
            return Err(Error::Validation(format!(
                "box dimensions must be positive, got {}x{}x{}",
                self.length, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Same box with `length >= width` and yaw in `[-π/2, π/2)`.
    pub fn canonical(&self) -> OrientedBox {
        let (length, width, yaw) = if self.length >= self.width {
            (self.length, self.width, self.yaw)
        } else {
            (self.width, self.length, self.yaw + FRAC_PI_2)
        };
        OrientedBox {
            length,
            width,
            yaw: normalize_half_turn(yaw),
            ..*self
        }
    }

    pub fn z_min(&self) -> f64 {
        self.center.z - self.height / 2.0
    }

    pub fn z_max(&self) -> f64 {
        self.center.z + self.height / 2.0
    }

    /// Express a world point in the box frame (x along length, y along width).
    pub fn to_local(&self, p: &Point3) -> Point3 {
        let (s, c) = self.yaw.sin_cos();
        let dx = p.x - self.center.x;
        let dy = p.y - self.center.y;
        Point3::new(c * dx + s * dy, -s * dx + c * dy, p.z - self.center.z)
    }

    pub fn contains(&self, p: &Point3, tol: f64) -> bool {
        let l = self.to_local(p);
        l.x.abs() <= self.length / 2.0 + tol
            && l.y.abs() <= self.width / 2.0 + tol
            && l.z.abs() <= self.height / 2.0 + tol
    }
}

/// Footprint corners in counter-clockwise order.
pub fn box_corners_bev(b: &OrientedBox) -> [BevPoint; 4] {
    let (s, c) = b.yaw.sin_cos();
    let hl = b.length / 2.0;
    let hw = b.width / 2.0;
    [(hl, -hw), (hl, hw), (-hl, hw), (-hl, -hw)]
        .map(|(lx, ly)| BevPoint::new(b.center.x + c * lx - s * ly, b.center.y + s * lx + c * ly))
}

pub fn box_volume(b: &OrientedBox) -> f64 {
    b.length * b.width * b.height
}

/// Shoelace area; positive for counter-clockwise polygons.
pub fn signed_area(poly: &[BevPoint]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}
