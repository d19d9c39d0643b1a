//! Search-based L-shape fitting of yaw-oriented boxes to point clusters.
//!
//! Candidate headings are scanned over a quarter turn; for each heading the
//! points are projected onto the rotated axes and the selected criterion
//! scores how well the tight rectangle at that heading explains them.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BevPoint, OrientedBox, Point3, PointCloud};

/// Distances below this are clipped by the closeness criterion.
pub const CLOSENESS_CLIP: f64 = 0.01;
/// Minimum extent of any fitted dimension.
pub const MIN_EXTENT: f64 = 0.05;
/// Sub-steps per grid step scanned by the refinement pass.
const REFINE_STEPS: usize = 100;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Closeness,
    Variance,
    Area,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitParams {
    /// Heading grid step in radians.
    pub angle_step: f64,
    pub criterion: Criterion,
    pub min_points: usize,
    /// Rescan `±angle_step` around the grid optimum at `angle_step / 100`.
    pub refine: bool,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            angle_step: 1f64.to_radians(),
            criterion: Criterion::Closeness,
            min_points: 5,
            refine: true,
        }
    }
}

impl FitParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.angle_step > 0.0 && self.angle_step <= std::f64::consts::PI / 8.0) {
            return Err(Error::Config("boxfit.angle_step must lie in (0, π/8]".into()));
        }
        if self.min_points < 3 {
            return Err(Error::Config("boxfit.min_points must be >= 3".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxFit {
    pub bbox: OrientedBox,
    /// Set when some extent was clamped to [`MIN_EXTENT`].
    pub degenerate: bool,
}

struct Projection {
    c1: Vec<f64>,
    c2: Vec<f64>,
    min1: f64,
    max1: f64,
    min2: f64,
    max2: f64,
}

fn project(points: &[BevPoint], theta: f64) -> Projection {
    let (s, c) = theta.sin_cos();
    let c1: Vec<f64> = points.iter().map(|p| c * p.x + s * p.y).collect();
    let c2: Vec<f64> = points.iter().map(|p| -s * p.x + c * p.y).collect();
    let (min1, max1) = min_max(&c1);
    let (min2, max2) = min_max(&c2);
    Projection {
        c1,
        c2,
        min1,
        max1,
        min2,
        max2,
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    })
}

fn variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

fn score(proj: &Projection, criterion: Criterion) -> f64 {
    let edge = |c: f64, lo: f64, hi: f64| (hi - c).min(c - lo);
    match criterion {
        Criterion::Closeness => proj
            .c1
            .iter()
            .zip(&proj.c2)
            .map(|(&a, &b)| {
                let d = edge(a, proj.min1, proj.max1).min(edge(b, proj.min2, proj.max2));
                1.0 / d.max(CLOSENESS_CLIP)
            })
            .sum(),
        Criterion::Variance => {
            let mut e1 = Vec::new();
            let mut e2 = Vec::new();
            for (&a, &b) in proj.c1.iter().zip(&proj.c2) {
                let d1 = edge(a, proj.min1, proj.max1);
                let d2 = edge(b, proj.min2, proj.max2);
                if d1 < d2 {
                    e1.push(d1);
                } else {
                    e2.push(d2);
                }
            }
            -(variance(&e1) + variance(&e2))
        }
        Criterion::Area => -((proj.max1 - proj.min1) * (proj.max2 - proj.min2)),
    }
}

/// Score of the rectangle hypothesis at heading `theta`; higher is better.
pub fn lshape_criterion(points: &[BevPoint], theta: f64, criterion: Criterion) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "criterion needs at least 3 points, got {}",
            points.len()
        )));
    }
    Ok(score(&project(points, theta), criterion))
}

/// Grid headings `k·step` covering `[0, π/2)`.
pub fn heading_grid(step: f64) -> Vec<f64> {
    let n = (FRAC_PI_2 / step).ceil() as usize;
    (0..n).map(|k| k as f64 * step).filter(|&t| t < FRAC_PI_2).collect()
}

/// Best grid heading and its score; ties resolve to the smallest heading.
pub fn search_heading(points: &[BevPoint], step: f64, criterion: Criterion) -> Result<(f64, f64)> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "criterion needs at least 3 points, got {}",
            points.len()
        )));
    }
    let mut best = (0.0, f64::NEG_INFINITY);
    for theta in heading_grid(step) {
        let s = score(&project(points, theta), criterion);
        if s > best.1 {
            best = (theta, s);
        }
    }
    Ok(best)
}

/// Fine rescan around the grid optimum. A candidate replaces the incumbent
/// only if it scores strictly higher, or scores equal with a strictly
/// smaller footprint.
fn refine_heading(points: &[BevPoint], grid: (f64, f64), step: f64, criterion: Criterion) -> f64 {
    let area = |p: &Projection| (p.max1 - p.min1) * (p.max2 - p.min2);
    let mut best_theta = grid.0;
    let mut best_score = grid.1;
    let mut best_area = area(&project(points, grid.0));
    let fine = step / REFINE_STEPS as f64;
    for k in 1..=REFINE_STEPS {
        for theta in [grid.0 - k as f64 * fine, grid.0 + k as f64 * fine] {
            let proj = project(points, theta);
            let s = score(&proj, criterion);
            let a = area(&proj);
            if s > best_score || (s == best_score && a < best_area) {
                best_theta = theta;
                best_score = s;
                best_area = a;
            }
        }
    }
    best_theta
}

/// Tight yaw-oriented box around `cluster`.
pub fn fit_box(cluster: &PointCloud, params: &FitParams) -> Result<BoxFit> {
    params.validate()?;
    cluster.validate()?;
    if cluster.len() < params.min_points {
        return Err(Error::TooFewPoints {
            got: cluster.len(),
            need: params.min_points,
        });
    }
    // Sorting first makes the result independent of input order.
    let mut pts: Vec<Point3> = cluster.points.clone();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then(a.z.total_cmp(&b.z)));
    let bev: Vec<BevPoint> = pts.iter().map(|p| BevPoint::new(p.x, p.y)).collect();

    let grid = search_heading(&bev, params.angle_step, params.criterion)?;
    let theta = if params.refine {
        refine_heading(&bev, grid, params.angle_step, params.criterion)
    } else {
        grid.0
    };

    let proj = project(&bev, theta);
    let (zmin, zmax) = min_max(&pts.iter().map(|p| p.z).collect::<Vec<_>>());
    let mid1 = (proj.min1 + proj.max1) / 2.0;
    let mid2 = (proj.min2 + proj.max2) / 2.0;
    let (s, c) = theta.sin_cos();
    let center = Point3::new(c * mid1 - s * mid2, s * mid1 + c * mid2, (zmin + zmax) / 2.0);

    let mut degenerate = false;
    let mut clamp = |v: f64| {
        if v < MIN_EXTENT {
            degenerate = true;
            MIN_EXTENT
        } else {
            v
        }
    };
    let length = clamp(proj.max1 - proj.min1);
    let width = clamp(proj.max2 - proj.min2);
    let height = clamp(zmax - zmin);
    let bbox = OrientedBox::new(center, length, width, height, theta)?.canonical();
    Ok(BoxFit { bbox, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rectangle_outline(l: f64, w: f64, yaw: f64, per_side: usize) -> Vec<BevPoint> {
        let (s, c) = yaw.sin_cos();
        let mut out = Vec::new();
        for i in 0..per_side {
            let t = i as f64 / per_side as f64;
            for (x, y) in [
                (-l / 2.0 + t * l, -w / 2.0),
                (l / 2.0, -w / 2.0 + t * w),
                (l / 2.0 - t * l, w / 2.0),
                (-l / 2.0, w / 2.0 - t * w),
            ] {
                out.push(BevPoint::new(c * x - s * y, s * x + c * y));
            }
        }
        out
    }

    fn lift(bev: &[BevPoint], z0: f64, z1: f64) -> PointCloud {
        PointCloud::new(
            bev.iter()
                .enumerate()
                .map(|(i, p)| Point3::new(p.x, p.y, if i % 2 == 0 { z0 } else { z1 }))
                .collect(),
        )
    }

    #[test]
    fn boundary_points_maximize_closeness_at_zero() {
        let pts = rectangle_outline(4.0, 2.0, 0.0, 12);
        let at_zero = lshape_criterion(&pts, 0.0, Criterion::Closeness).unwrap();
        assert_abs_diff_eq!(at_zero, pts.len() as f64 / CLOSENESS_CLIP, epsilon = 1e-6);
        for theta in heading_grid(1f64.to_radians()) {
            assert!(lshape_criterion(&pts, theta, Criterion::Closeness).unwrap() <= at_zero);
        }
    }

    #[test]
    fn area_criterion_is_negative_area() {
        let pts = rectangle_outline(4.0, 2.0, 0.0, 5);
        let s = lshape_criterion(&pts, 0.0, Criterion::Area).unwrap();
        assert_abs_diff_eq!(s, -8.0, epsilon = 1e-12);
    }

    #[test]
    fn criterion_needs_three_points() {
        let pts = [BevPoint::new(0.0, 0.0), BevPoint::new(1.0, 0.0)];
        assert!(matches!(
            lshape_criterion(&pts, 0.0, Criterion::Closeness),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn grid_search_matches_fine_scan_on_grid_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let step = 1f64.to_radians();
        for criterion in [Criterion::Closeness, Criterion::Variance, Criterion::Area] {
            for _ in 0..5 {
                let pts: Vec<BevPoint> = (0..100)
                    .map(|_| BevPoint::new(rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)))
                    .collect();
                let (theta, best) = search_heading(&pts, step, criterion).unwrap();
                // Oracle: scan at step/10, keep the samples that coincide with the grid.
                let fine = step / 10.0;
                let mut oracle = (0.0, f64::NEG_INFINITY);
                let mut k = 0usize;
                while (k as f64) * fine < FRAC_PI_2 {
                    if k.is_multiple_of(10) {
                        let t = (k / 10) as f64 * step;
                        let s = lshape_criterion(&pts, t, criterion).unwrap();
                        if s > oracle.1 {
                            oracle = (t, s);
                        }
                    }
                    k += 1;
                }
                assert_eq!(theta, oracle.0);
                assert_eq!(best, oracle.1);
            }
        }
    }

    #[test]
    fn exact_axis_aligned_rectangle() {
        let cloud = lift(&rectangle_outline(4.0, 2.0, 0.0, 10), 0.0, 1.5);
        let fit = fit_box(&cloud, &FitParams::default()).unwrap();
        let b = fit.bbox;
        assert!(!fit.degenerate);
        assert_abs_diff_eq!(b.length, 4.0, epsilon = 1e-6);
        assert_abs_diff_eq!(b.width, 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(b.height, 1.5, epsilon = 1e-6);
        assert_abs_diff_eq!(b.yaw, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(b.center.z, 0.75, epsilon = 1e-6);
    }

    #[test]
    fn rotated_rectangle_recovers_heading() {
        let yaw = 30f64.to_radians();
        let cloud = lift(&rectangle_outline(4.0, 2.0, yaw, 10), 0.0, 1.5);
        for refine in [false, true] {
            let params = FitParams {
                refine,
                ..FitParams::default()
            };
            let b = fit_box(&cloud, &params).unwrap().bbox;
            assert!((b.yaw - yaw).abs() <= params.angle_step);
            assert!((b.length - 4.0).abs() / 4.0 <= 0.01);
            assert!((b.width - 2.0).abs() / 2.0 <= 0.01);
        }
    }

    #[test]
    fn collinear_points_clamp_width() {
        let cloud = PointCloud::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 0.5),
            Point3::new(2.0, 2.0, 1.0),
        ]);
        let params = FitParams {
            min_points: 3,
            ..FitParams::default()
        };
        let fit = fit_box(&cloud, &params).unwrap();
        assert!(fit.degenerate);
        assert_abs_diff_eq!(fit.bbox.width, MIN_EXTENT, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.bbox.length, 8f64.sqrt(), epsilon = 1e-3);
    }

    #[test]
    fn too_few_points() {
        let cloud = PointCloud::new(vec![Point3::origin(); 4]);
        assert!(matches!(
            fit_box(&cloud, &FitParams::default()),
            Err(Error::TooFewPoints { got: 4, need: 5 })
        ));
    }

    #[test]
    fn order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts: Vec<Point3> = (0..60)
            .map(|_| {
                Point3::new(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0.0..2.0),
                )
            })
            .collect();
        let a = fit_box(&PointCloud::new(pts.clone()), &FitParams::default()).unwrap();
        pts.reverse();
        pts.rotate_left(17);
        let b = fit_box(&PointCloud::new(pts), &FitParams::default()).unwrap();
        assert_eq!(a, b);
    }
}
