//! Deterministic synthetic multi-traversal scenes.
//!
//! Every frame is a place visited `traversals` times. The place is a walled
//! enclosure with a flat ground and a few static pillars; foreground objects
//! are placed independently in each traversal, so only they change between
//! visits. Traversal 0 is the "current" one: its object placements are the
//! ground truth and its sensor frame is the place frame. LiDAR returns come
//! from ray casting; masks are the pixels whose camera ray first hits the
//! object, dilated.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fusion::{Label, Source};
use crate::geometry::{CameraModel, OrientedBox, Point3, PointCloud, Pose};
use crate::io::{FrameData, ScanData};
use crate::lift::Mask2D;
use crate::rng::{keyed_rng, keyed_uniform};
use nalgebra::{Matrix3, Vector3};

/// Offset between consecutive places in the world frame.
const PLACE_SPACING: f64 = 1000.0;
/// Tries per object before it is dropped from a traversal.
const PLACEMENT_ATTEMPTS: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub ground_z: f64,
    /// Far wall at `x = wall_front`, near wall at `x = -wall_back`.
    pub wall_front: f64,
    pub wall_back: f64,
    /// Side walls at `y = ±wall_side`.
    pub wall_side: f64,
    pub wall_height: f64,
    /// Static boxes as `[x, y, length, width, height]`, standing on the ground.
    pub pillars: Vec<[f64; 5]>,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            ground_z: -1.8,
            wall_front: 110.0,
            wall_back: 10.0,
            wall_side: 30.0,
            wall_height: 40.0,
            pillars: vec![
                [14.0, -12.0, 1.0, 1.0, 6.0],
                [26.0, 16.0, 1.0, 1.0, 6.0],
                [48.0, -24.0, 1.5, 1.5, 8.0],
                [70.0, 26.0, 1.5, 1.5, 8.0],
            ],
        }
    }
}

/// One object class: how many per traversal, where, and how big.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub name: String,
    pub count: usize,
    /// Center distance range from the ego, meters.
    pub distance: [f64; 2],
    pub length: [f64; 2],
    pub width: [f64; 2],
    pub height: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarSpec {
    pub beams: usize,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub azimuth_step_deg: f64,
    /// Total horizontal field of view centered on +x.
    pub azimuth_fov_deg: f64,
    pub min_range: f64,
    pub max_range: f64,
    pub dropout: f64,
    pub range_noise: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            beams: 64,
            elevation_min_deg: -25.0,
            elevation_max_deg: 5.0,
            azimuth_step_deg: 0.25,
            azimuth_fov_deg: 180.0,
            min_range: 0.5,
            max_range: 120.0,
            dropout: 0.05,
            range_noise: 0.01,
        }
    }
}

impl LidarSpec {
    pub fn azimuth_steps(&self) -> usize {
        (self.azimuth_fov_deg / self.azimuth_step_deg).round() as usize + 1
    }

    pub fn rays_per_scan(&self) -> usize {
        self.beams * self.azimuth_steps()
    }
}

/// Forward-looking pinhole camera at the LiDAR origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSpec {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            width: 800,
            height: 450,
            focal: 400.0,
        }
    }
}

impl CameraSpec {
    /// Vehicle axes (x forward, y left, z up) to camera axes (x right,
    /// y down, z forward).
    pub fn model(&self) -> Result<CameraModel> {
        let rotation = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
        let extrinsic = Pose::new(rotation, Vector3::zeros())?;
        CameraModel::pinhole(
            self.focal,
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
            extrinsic,
            self.width,
            self.height,
        )
    }
}

/// Mask corruption for robustness runs. The defaults give the clean masks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskNoise {
    /// Square dilation radius in pixels.
    pub dilation: u32,
    /// Erosion applied after dilation.
    pub erosion: u32,
    /// Random rectangles added per frame as spurious detections.
    pub false_masks: u32,
}

impl Default for MaskNoise {
    fn default() -> Self {
        Self {
            dilation: 1,
            erosion: 0,
            false_masks: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub frames: usize,
    /// Trailing frames held out for evaluation.
    pub eval_frames: usize,
    pub traversals: usize,
    /// Pose jitter of traversals after the first.
    pub jitter_translation: f64,
    pub jitter_yaw_deg: f64,
    /// Objects are placed within this bearing of +x.
    pub placement_azimuth_deg: f64,
    /// Free space kept between placed objects.
    pub placement_gap: f64,
    pub world: WorldSpec,
    pub objects: Vec<ObjectSpec>,
    pub lidar: LidarSpec,
    pub camera: CameraSpec,
    pub mask_noise: MaskNoise,
}

impl Default for SceneSpec {
    fn default() -> Self {
        let class = |name: &str, count, distance, l, w, h| ObjectSpec {
            name: name.into(),
            count,
            distance,
            length: l,
            width: w,
            height: h,
        };
        Self {
            seed: 0,
            frames: 20,
            eval_frames: 5,
            traversals: 4,
            jitter_translation: 0.05,
            jitter_yaw_deg: 0.05,
            placement_azimuth_deg: 35.0,
            placement_gap: 1.0,
            world: WorldSpec::default(),
            objects: vec![
                class("car", 4, [6.0, 30.0], [3.9, 4.9], [1.7, 2.0], [1.4, 1.7]),
                class("pedestrian", 3, [6.0, 30.0], [0.5, 0.9], [0.5, 0.8], [1.5, 1.9]),
                class("car", 3, [35.0, 80.0], [3.9, 4.9], [1.7, 2.0], [1.4, 1.7]),
                class("pedestrian", 2, [35.0, 80.0], [0.5, 0.9], [0.5, 0.8], [1.5, 1.9]),
            ],
            lidar: LidarSpec::default(),
            camera: CameraSpec::default(),
            mask_noise: MaskNoise::default(),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.traversals < 2 {
            return bad(format!("scene needs at least 2 traversals, got {}", self.traversals));
        }
        if self.eval_frames > self.frames {
            return bad("eval_frames exceeds frames".into());
        }
        let l = &self.lidar;
        if l.beams == 0 || !(l.azimuth_step_deg > 0.0) || !(l.azimuth_fov_deg > 0.0) {
            return bad("lidar needs beams > 0 and positive azimuth step and fov".into());
        }
        if !(0.0..1.0).contains(&l.dropout) || !(l.max_range > l.min_range && l.min_range >= 0.0) {
            return bad("lidar dropout must lie in [0, 1) and max_range > min_range >= 0".into());
        }
        if !(l.range_noise >= 0.0) || !(self.jitter_translation >= 0.0) || !(self.jitter_yaw_deg >= 0.0) {
            return bad("noise and jitter magnitudes must be >= 0".into());
        }
        if self.camera.width == 0 || self.camera.height == 0 || !(self.camera.focal > 0.0) {
            return bad("camera needs a positive size and focal length".into());
        }
        for o in &self.objects {
            for (what, [lo, hi]) in [
                ("distance", o.distance),
                ("length", o.length),
                ("width", o.width),
                ("height", o.height),
            ] {
                if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                    return bad(format!("object class {}: bad {what} range [{lo}, {hi}]", o.name));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

/// What a LiDAR ray hit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Surface {
    Ground,
    Wall,
    Pillar,
    /// Index into the traversal's placement list.
    Object(u32),
}

impl Surface {
    pub fn is_static(self) -> bool {
        !matches!(self, Surface::Object(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scan {
    /// Returns in the sensor frame.
    pub cloud: PointCloud,
    /// Sensor to world.
    pub pose: Pose,
    pub surfaces: Vec<Surface>,
    /// Objects present during this traversal, in the place frame.
    pub objects: Vec<PlacedObject>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlacedObject {
    pub class: String,
    pub bbox: OrientedBox,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneFrame {
    pub id: u32,
    pub split: Split,
    pub scans: Vec<Scan>,
    pub camera: CameraModel,
    /// One per visible ground-truth object, then any false masks.
    pub masks: Vec<Mask2D>,
}

impl SceneFrame {
    /// Boxes of the current traversal, in its sensor frame.
    pub fn ground_truth(&self) -> Vec<OrientedBox> {
        self.scans[0].objects.iter().map(|o| o.bbox).collect()
    }

    /// The frame as the pipeline sees it after a write and reload.
    pub fn frame_data(&self) -> FrameData {
        FrameData {
            id: self.id,
            split: self.split,
            scans: self
                .scans
                .iter()
                .map(|s| ScanData {
                    cloud: s.cloud.clone(),
                    pose: s.pose,
                })
                .collect(),
            camera: self.camera,
            masks: self.masks.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    pub frames: Vec<SceneFrame>,
}

/// Generate every frame of `spec`. Single-threaded and fully determined by
/// the `SceneSpec`.
pub fn generate(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let camera = spec.camera.model()?;
    let pillars = pillar_boxes(&spec.world)?;
    let mut frames = Vec::with_capacity(spec.frames);
    for f in 0..spec.frames {
        let id = f as u32;
        let place = Pose::from_translation(f as f64 * PLACE_SPACING, 0.0, 0.0);
        let mut scans = Vec::with_capacity(spec.traversals);
        for t in 0..spec.traversals {
            let objects = place_objects(spec, &pillars, id, t)?;
            let local = traversal_pose(spec, id, t);
            let (cloud, surfaces) = cast_scan(spec, &pillars, &objects, &local, id, t)?;
            scans.push(Scan {
                cloud,
                pose: place.compose(&local),
                surfaces,
                objects,
            });
        }
        let masks = render_masks(spec, &camera, &pillars, &scans[0].objects, id)?;
        let split = if f + spec.eval_frames >= spec.frames {
            Split::Eval
        } else {
            Split::Train
        };
        frames.push(SceneFrame {
            id,
            split,
            scans,
            camera,
            masks,
        });
    }
    warn_on_empty_groups(&frames);
    Ok(Scene {
        spec: spec.clone(),
        frames,
    })
}

fn warn_on_empty_groups(frames: &[SceneFrame]) {
    use crate::selfpace::{GroupId, GroupThresholds};
    let t = GroupThresholds::default();
    let mut counts = [0usize; 4];
    for f in frames {
        for b in f.ground_truth() {
            counts[t.group_of(&b).index()] += 1;
        }
    }
    for g in GroupId::ALL {
        if counts[g.index()] == 0 {
            log::warn!("scene has no {} objects", g.name());
        }
    }
}

fn pillar_boxes(world: &WorldSpec) -> Result<Vec<OrientedBox>> {
    world
        .pillars
        .iter()
        .map(|&[x, y, l, w, h]| OrientedBox::new(Point3::new(x, y, world.ground_z + h / 2.0), l, w, h, 0.0))
        .collect()
}

fn traversal_pose(spec: &SceneSpec, frame: u32, t: usize) -> Pose {
    if t == 0 {
        return Pose::identity();
    }
    let mut rng = keyed_rng(&[spec.seed, frame as u64, t as u64, 0x90_5e]);
    let j = spec.jitter_translation;
    let a = spec.jitter_yaw_deg.to_radians();
    let dx = if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 };
    let dy = if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 };
    let yaw = if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 };
    Pose::from_yaw(yaw, Vector3::new(dx, dy, 0.0))
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn half_diagonal(b: &OrientedBox) -> f64 {
    0.5 * b.length.hypot(b.width)
}

fn place_objects(spec: &SceneSpec, pillars: &[OrientedBox], frame: u32, t: usize) -> Result<Vec<PlacedObject>> {
    let mut rng = keyed_rng(&[spec.seed, frame as u64, t as u64, 0x0b_1ec7]);
    let az = spec.placement_azimuth_deg.to_radians();
    let ground = spec.world.ground_z;
    let mut placed: Vec<PlacedObject> = Vec::new();
    for class in &spec.objects {
        for _ in 0..class.count {
            let mut accepted = None;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let d = uniform(&mut rng, class.distance);
                let bearing = rng.random_range(-az..=az);
                let (l, w, h) = (
                    uniform(&mut rng, class.length),
                    uniform(&mut rng, class.width),
                    uniform(&mut rng, class.height),
                );
                let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                let b = OrientedBox::new(
                    Point3::new(d * bearing.cos(), d * bearing.sin(), ground + h / 2.0),
                    l,
                    w,
                    h,
                    yaw,
                )?
                .canonical();
                // Circumscribed circles apart by the gap, so no overlap and
                // room for the clusters to stay separate.
                let clear = |o: &OrientedBox| {
                    (b.center - o.center).xy().norm() > half_diagonal(&b) + half_diagonal(o) + spec.placement_gap
                };
                if placed.iter().all(|p| clear(&p.bbox)) && pillars.iter().all(clear) {
                    accepted = Some(b);
                    break;
                }
            }
            match accepted {
                Some(bbox) => placed.push(PlacedObject {
                    class: class.name.clone(),
                    bbox,
                }),
                None => log::warn!("frame {frame} traversal {t}: no room for a {}", class.name),
            }
        }
    }
    Ok(placed)
}

/// Nearest positive ray parameter of a ray against an oriented box.
fn ray_box(origin: &Point3, dir: &Vector3<f64>, b: &OrientedBox) -> Option<f64> {
    let (s, c) = b.yaw.sin_cos();
    let o = origin - b.center;
    let lo = Vector3::new(c * o.x + s * o.y, -s * o.x + c * o.y, o.z);
    let ld = Vector3::new(c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z);
    let half = [b.length / 2.0, b.width / 2.0, b.height / 2.0];
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        if ld[k].abs() < 1e-15 {
            if lo[k].abs() > half[k] {
                return None;
            }
            continue;
        }
        let a = (-half[k] - lo[k]) / ld[k];
        let bb = (half[k] - lo[k]) / ld[k];
        t0 = t0.max(a.min(bb));
        t1 = t1.min(a.max(bb));
    }
    if t0 > t1 || t1 <= 0.0 {
        return None;
    }
    Some(if t0 > 0.0 { t0 } else { t1 })
}

/// First surface hit by a unit ray, as `(distance, surface)`.
fn trace(
    world: &WorldSpec,
    pillars: &[OrientedBox],
    objects: &[PlacedObject],
    origin: &Point3,
    dir: &Vector3<f64>,
) -> Option<(f64, Surface)> {
    let mut best: Option<(f64, Surface)> = None;
    let mut consider = |t: f64, s: Surface| {
        if t > 0.0 && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, s));
        }
    };
    if dir.z < 0.0 {
        consider((world.ground_z - origin.z) / dir.z, Surface::Ground);
    }
    let walls = [
        (0, world.wall_front),
        (0, -world.wall_back),
        (1, world.wall_side),
        (1, -world.wall_side),
    ];
    for (axis, at) in walls {
        if dir[axis].abs() < 1e-15 {
            continue;
        }
        let t = (at - origin[axis]) / dir[axis];
        let z = origin.z + t * dir.z;
        if t > 0.0 && z >= world.ground_z && z <= world.ground_z + world.wall_height {
            consider(t, Surface::Wall);
        }
    }
    for p in pillars {
        if let Some(t) = ray_box(origin, dir, p) {
            consider(t, Surface::Pillar);
        }
    }
    for (i, o) in objects.iter().enumerate() {
        if let Some(t) = ray_box(origin, dir, &o.bbox) {
            consider(t, Surface::Object(i as u32));
        }
    }
    best
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

fn cast_scan(
    spec: &SceneSpec,
    pillars: &[OrientedBox],
    objects: &[PlacedObject],
    local: &Pose,
    frame: u32,
    t: usize,
) -> Result<(PointCloud, Vec<Surface>)> {
    let l = &spec.lidar;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut noise_rng = keyed_rng(&[spec.seed, frame as u64, t as u64, 0x4a_9e]);
    let origin = Point3::from(local.translation);
    let steps = l.azimuth_steps();
    let mut points = Vec::with_capacity(l.rays_per_scan());
    let mut surfaces = Vec::with_capacity(l.rays_per_scan());
    for beam in 0..l.beams {
        let elev = if l.beams == 1 {
            l.elevation_min_deg
        } else {
            l.elevation_min_deg + (l.elevation_max_deg - l.elevation_min_deg) * beam as f64 / (l.beams - 1) as f64
        }
        .to_radians();
        for k in 0..steps {
            let ray = (beam * steps + k) as u64;
            if keyed_uniform(&[spec.seed, frame as u64, t as u64, ray]) < l.dropout {
                continue;
            }
            let az = (-l.azimuth_fov_deg / 2.0 + l.azimuth_step_deg * k as f64).to_radians();
            let sensor_dir = Vector3::new(elev.cos() * az.cos(), elev.cos() * az.sin(), elev.sin());
            let dir = local.rotation * sensor_dir;
            let Some((dist, surface)) = trace(&spec.world, pillars, objects, &origin, &dir) else {
                continue;
            };
            if dist < l.min_range || dist > l.max_range {
                continue;
            }
            let r = dist + l.range_noise * normal.sample(&mut noise_rng);
            let p = sensor_dir * r;
            points.push(Point3::new(round_f32(p.x), round_f32(p.y), round_f32(p.z)));
            surfaces.push(surface);
        }
    }
    Ok((PointCloud::new(points), surfaces))
}

/// Pixels whose camera ray first hits object `index`.
fn modal_mask(
    spec: &SceneSpec,
    camera: &CameraModel,
    pillars: &[OrientedBox],
    objects: &[PlacedObject],
    index: usize,
) -> Result<Option<Mask2D>> {
    let (w, h) = (camera.width, camera.height);
    let k = camera.intrinsic;
    let (fx, fy, cx, cy) = (k[(0, 0)], k[(1, 1)], k[(0, 2)], k[(1, 2)]);
    let b = &objects[index].bbox;

    // Pixel rectangle covering the projected corners, or the whole image if
    // some corner is behind the camera.
    let (mut u0, mut v0, mut u1, mut v1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut behind = false;
    for c in crate::geometry::box_corners_bev(b) {
        for z in [b.z_min(), b.z_max()] {
            let pc = camera.extrinsic.apply(&Point3::new(c.x, c.y, z));
            if pc.z <= 1e-6 {
                behind = true;
                continue;
            }
            let (u, v) = (fx * pc.x / pc.z + cx, fy * pc.y / pc.z + cy);
            u0 = u0.min(u);
            u1 = u1.max(u);
            v0 = v0.min(v);
            v1 = v1.max(v);
        }
    }
    let clamp_u = |x: f64| x.clamp(0.0, (w - 1) as f64);
    let clamp_v = |x: f64| x.clamp(0.0, (h - 1) as f64);
    let (u0, u1, v0, v1) = if behind {
        (0, w - 1, 0, h - 1)
    } else {
        if u1 < 0.0 || v1 < 0.0 || u0 > (w - 1) as f64 || v0 > (h - 1) as f64 {
            return Ok(None);
        }
        (
            clamp_u(u0.floor()) as u32,
            clamp_u(u1.ceil()) as u32,
            clamp_v(v0.floor()) as u32,
            clamp_v(v1.ceil()) as u32,
        )
    };

    let cam_to_sensor = camera.extrinsic.inverse();
    let origin = Point3::from(cam_to_sensor.translation);
    let mut hit = vec![false; (w as usize) * (h as usize)];
    let mut any = false;
    for v in v0..=v1 {
        for u in u0..=u1 {
            let ray_cam = Vector3::new((u as f64 - cx) / fx, (v as f64 - cy) / fy, 1.0).normalize();
            let dir = cam_to_sensor.rotation * ray_cam;
            if let Some((_, Surface::Object(i))) = trace(&spec.world, pillars, objects, &origin, &dir) {
                if i as usize == index {
                    hit[(v * w + u) as usize] = true;
                    any = true;
                }
            }
        }
    }
    if !any {
        return Ok(None);
    }
    let hit = morph(&hit, w, h, spec.mask_noise.dilation, true);
    let hit = morph(&hit, w, h, spec.mask_noise.erosion, false);
    let mask = Mask2D::from_fn(w, h, |u, v| hit[(v * w + u) as usize])?;
    Ok((mask.area() > 0).then(|| mask.with_meta(Some(objects[index].class.clone()), Some(1.0))))
}

/// Square dilation (`grow`) or erosion by `radius` pixels.
fn morph(src: &[bool], w: u32, h: u32, radius: u32, grow: bool) -> Vec<bool> {
    if radius == 0 {
        return src.to_vec();
    }
    let (w, h, r) = (w as i64, h as i64, radius as i64);
    let at = |u: i64, v: i64| -> bool {
        if u < 0 || v < 0 || u >= w || v >= h {
            !grow
        } else {
            src[(v * w + u) as usize]
        }
    };
    let mut out = vec![false; src.len()];
    for v in 0..h {
        for u in 0..w {
            let mut acc = !grow;
            'window: for dv in -r..=r {
                for du in -r..=r {
                    let x = at(u + du, v + dv);
                    if grow && x {
                        acc = true;
                        break 'window;
                    }
                    if !grow && !x {
                        acc = false;
                        break 'window;
                    }
                }
            }
            out[(v * w + u) as usize] = acc;
        }
    }
    out
}

fn render_masks(
    spec: &SceneSpec,
    camera: &CameraModel,
    pillars: &[OrientedBox],
    objects: &[PlacedObject],
    frame: u32,
) -> Result<Vec<Mask2D>> {
    let mut masks = Vec::new();
    for i in 0..objects.len() {
        if let Some(m) = modal_mask(spec, camera, pillars, objects, i)? {
            masks.push(m);
        }
    }
    let mut rng = keyed_rng(&[spec.seed, frame as u64, 0xfa_15e]);
    let (w, h) = (camera.width, camera.height);
    for _ in 0..spec.mask_noise.false_masks {
        let bw = rng.random_range(4..=w.clamp(5, 60));
        let bh = rng.random_range(4..=h.clamp(5, 60));
        let u0 = rng.random_range(0..w.saturating_sub(bw).max(1));
        let v0 = rng.random_range(0..h.saturating_sub(bh).max(1));
        let m = Mask2D::from_fn(w, h, |u, v| (u0..u0 + bw).contains(&u) && (v0..v0 + bh).contains(&v))?;
        masks.push(m.with_meta(Some("false".into()), Some(0.5)));
    }
    Ok(masks)
}

/// Write `scene` under `dir` in the ingestion formats and return the
/// manifest path. The `SceneSpec` is echoed to `scene.toml`.
pub fn write_scene(scene: &Scene, dir: &Path) -> Result<PathBuf> {
    use crate::io::{
        save_camera, save_cloud, save_labels, save_masks, save_pose, write_atomic, write_json, FrameEntry, Manifest,
        ScanEntry,
    };
    let mut frames = Vec::with_capacity(scene.frames.len());
    let mut truth = Vec::new();
    for f in &scene.frames {
        let mut scans = Vec::with_capacity(f.scans.len());
        for (t, s) in f.scans.iter().enumerate() {
            let entry = ScanEntry {
                cloud: PathBuf::from(format!("clouds/f{:04}_t{t}.bin", f.id)),
                pose: PathBuf::from(format!("poses/f{:04}_t{t}.json", f.id)),
            };
            save_cloud(&dir.join(&entry.cloud), &s.cloud)?;
            save_pose(&dir.join(&entry.pose), &s.pose)?;
            scans.push(entry);
        }
        let camera = PathBuf::from(format!("cameras/f{:04}.json", f.id));
        let masks = PathBuf::from(format!("masks/f{:04}.json", f.id));
        save_camera(&dir.join(&camera), &f.camera)?;
        save_masks(&dir.join(&masks), f.camera.width, f.camera.height, &f.masks)?;
        for b in f.ground_truth() {
            truth.push(Label::new(b, Source::Truth, 1.0, f.id)?);
        }
        frames.push(FrameEntry {
            id: f.id,
            split: f.split,
            scans,
            camera,
            masks,
        });
    }
    let gt = PathBuf::from("ground_truth.jsonl");
    save_labels(&dir.join(&gt), &truth)?;
    let spec = toml::to_string(&scene.spec).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(&dir.join("scene.toml"), spec.as_bytes())?;
    let manifest = dir.join("manifest.json");
    write_json(
        &manifest,
        &Manifest {
            frames,
            ground_truth: Some(gt),
        },
    )?;
    Ok(manifest)
}
