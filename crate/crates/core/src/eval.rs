//! Rotated-box overlap and distance-bucketed average precision.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{box_distance, Label};
use crate::geometry::{box_corners_bev, signed_area, BevPoint, OrientedBox};

/// Keep the part of `subject` on the left of the directed line `a → b`.
fn clip_half_plane(subject: &[BevPoint], a: BevPoint, b: BevPoint) -> Vec<BevPoint> {
    let side = |p: &BevPoint| (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    let mut out = Vec::with_capacity(subject.len() + 2);
    for i in 0..subject.len() {
        let cur = subject[i];
        let prev = subject[(i + subject.len() - 1) % subject.len()];
        let (sc, sp) = (side(&cur), side(&prev));
        if sc >= 0.0 {
            if sp < 0.0 {
                out.push(intersect(prev, cur, sp, sc));
            }
            out.push(cur);
        } else if sp >= 0.0 {
            out.push(intersect(prev, cur, sp, sc));
        }
    }
    out
}

fn intersect(p: BevPoint, q: BevPoint, sp: f64, sq: f64) -> BevPoint {
    let t = sp / (sp - sq);
    BevPoint::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
}

/// Area of the intersection of two convex counter-clockwise polygons
/// (Sutherland–Hodgman).
pub fn convex_intersection_area(a: &[BevPoint], b: &[BevPoint]) -> f64 {
    let mut poly = a.to_vec();
    for i in 0..b.len() {
        if poly.len() < 3 {
            return 0.0;
        }
        poly = clip_half_plane(&poly, b[i], b[(i + 1) % b.len()]);
    }
    if poly.len() < 3 {
        0.0
    } else {
        signed_area(&poly).max(0.0)
    }
}

pub fn bev_intersection_area(a: &OrientedBox, b: &OrientedBox) -> f64 {
    convex_intersection_area(&box_corners_bev(a), &box_corners_bev(b))
}

pub fn bev_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = bev_intersection_area(a, b);
    let union = a.length * a.width + b.length * b.width - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

pub fn iou_3d(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let dz = (a.z_max().min(b.z_max()) - a.z_min().max(b.z_min())).max(0.0);
    if dz == 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * dz;
    let union = a.length * a.width * a.height + b.length * b.width * b.height - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IouKind {
    Bev,
    ThreeD,
}

impl IouKind {
    pub fn iou(self, a: &OrientedBox, b: &OrientedBox) -> f64 {
        match self {
            IouKind::Bev => bev_iou(a, b),
            IouKind::ThreeD => iou_3d(a, b),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bucket {
    pub lo: f64,
    pub hi: f64,
}

impl Bucket {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, d: f64) -> bool {
        d >= self.lo && d < self.hi
    }

    pub fn name(&self) -> String {
        format!("{}-{}", self.lo, self.hi)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketSide {
    #[default]
    Prediction,
    GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub buckets: Vec<Bucket>,
    /// 40 (recall points 1/40..1) or 11 (recall points 0, 0.1, .., 1).
    pub recall_points: u32,
    pub bucket_by: BucketSide,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.25,
            buckets: vec![
                Bucket::new(0.0, 30.0),
                Bucket::new(30.0, 50.0),
                Bucket::new(50.0, 80.0),
                Bucket::new(0.0, 80.0),
            ],
            recall_points: 40,
            bucket_by: BucketSide::Prediction,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::Config("eval.iou_threshold must lie in (0, 1]".into()));
        }
        if self.buckets.is_empty() {
            return Err(Error::Config("eval.buckets must not be empty".into()));
        }
        if self.buckets.iter().any(|b| !(b.lo < b.hi)) {
            return Err(Error::Config("every eval bucket needs lo < hi".into()));
        }
        if !matches!(self.recall_points, 11 | 40) {
            return Err(Error::Config("eval.recall_points must be 11 or 40".into()));
        }
        Ok(())
    }

    fn recall_grid(&self) -> Vec<f64> {
        match self.recall_points {
            11 => (0..=10).map(|i| i as f64 / 10.0).collect(),
            n => (1..=n).map(|i| i as f64 / n as f64).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketMetrics {
    pub bucket: Bucket,
    /// `None` when the bucket holds no ground truth.
    pub ap_bev: Option<f64>,
    pub ap_3d: Option<f64>,
    pub recall_bev: Option<f64>,
    pub recall_3d: Option<f64>,
    pub num_gt: usize,
    pub num_pred: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub buckets: Vec<BucketMetrics>,
}

impl EvalReport {
    pub fn bucket(&self, lo: f64, hi: f64) -> Option<&BucketMetrics> {
        self.buckets.iter().find(|b| b.bucket.lo == lo && b.bucket.hi == hi)
    }

    /// The bucket spanning the widest range, used as the headline number.
    pub fn full_range(&self) -> Option<&BucketMetrics> {
        self.buckets
            .iter()
            .max_by(|a, b| (a.bucket.hi - a.bucket.lo).total_cmp(&(b.bucket.hi - b.bucket.lo)))
    }
}

/// Descending confidence; ties fall back to frame and box geometry so the
/// ranking does not depend on input order.
pub fn rank_predictions(preds: &[Label]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&preds[i], &preds[j]);
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.frame.cmp(&b.frame))
            .then_with(|| geometry_key(a).partial_cmp(&geometry_key(b)).unwrap_or(Ordering::Equal))
    });
    order
}

fn geometry_key(l: &Label) -> [f64; 7] {
    let b = &l.bbox;
    [b.center.x, b.center.y, b.center.z, b.length, b.width, b.height, b.yaw]
}

/// Greedy matching in ranked order. `result[k]` is the ground-truth index
/// matched by the `k`-th ranked prediction. Each prediction takes the
/// unmatched same-frame candidate of highest IoU at or above `threshold`.
pub fn greedy_match(
    preds: &[Label],
    ranked: &[usize],
    gt: &[Label],
    candidates: &[usize],
    kind: IouKind,
    threshold: f64,
) -> Vec<Option<usize>> {
    let mut taken = vec![false; gt.len()];
    ranked
        .iter()
        .map(|&p| {
            let pred = &preds[p];
            let mut best: Option<(usize, f64)> = None;
            for &g in candidates {
                if taken[g] || gt[g].frame != pred.frame {
                    continue;
                }
                let iou = kind.iou(&pred.bbox, &gt[g].bbox);
                if iou >= threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            best.map(|(g, _)| {
                taken[g] = true;
                g
            })
        })
        .collect()
}

/// Interpolated AP from per-rank true-positive flags.
pub fn interpolated_ap(tp: &[bool], num_gt: usize, recall_grid: &[f64]) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut curve = Vec::with_capacity(tp.len());
    for (k, &t) in tp.iter().enumerate() {
        hits += t as usize;
        curve.push((hits as f64 / num_gt as f64, hits as f64 / (k + 1) as f64));
    }
    // Running max of precision from the tail.
    let mut envelope = curve.clone();
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k].1 = envelope[k].1.max(envelope[k + 1].1);
    }
    let sum: f64 = recall_grid
        .iter()
        .map(|&r| {
            envelope
                .iter()
                .find(|(rec, _)| *rec >= r - 1e-12)
                .map_or(0.0, |(_, p)| *p)
        })
        .sum();
    sum / recall_grid.len() as f64
}

struct BucketRun {
    ap: Option<f64>,
    recall: Option<f64>,
    num_pred: usize,
}

fn run_bucket(preds: &[Label], gt: &[Label], bucket: &Bucket, kind: IouKind, config: &EvalConfig) -> BucketRun {
    let gt_in: Vec<usize> = (0..gt.len())
        .filter(|&g| bucket.contains(box_distance(&gt[g].bbox)))
        .collect();
    let pred_in_bucket = |p: &Label| bucket.contains(box_distance(&p.bbox));
    let ranked_all = rank_predictions(preds);

    let tp: Vec<bool> = match config.bucket_by {
        BucketSide::Prediction => {
            let ranked: Vec<usize> = ranked_all.into_iter().filter(|&p| pred_in_bucket(&preds[p])).collect();
            greedy_match(preds, &ranked, gt, &gt_in, kind, config.iou_threshold)
                .into_iter()
                .map(|m| m.is_some())
                .collect()
        }
        BucketSide::GroundTruth => {
            let all_gt: Vec<usize> = (0..gt.len()).collect();
            let matches = greedy_match(preds, &ranked_all, gt, &all_gt, kind, config.iou_threshold);
            ranked_all
                .iter()
                .zip(matches)
                .filter_map(|(&p, m)| match m {
                    Some(g) if gt_in.binary_search(&g).is_ok() => Some(true),
                    Some(_) => None,
                    None if pred_in_bucket(&preds[p]) => Some(false),
                    None => None,
                })
                .collect()
        }
    };

    let num_pred = tp.len();
    if gt_in.is_empty() {
        return BucketRun {
            ap: None,
            recall: None,
            num_pred,
        };
    }
    let hits = tp.iter().filter(|&&t| t).count();
    BucketRun {
        ap: Some(interpolated_ap(&tp, gt_in.len(), &config.recall_grid())),
        recall: Some(hits as f64 / gt_in.len() as f64),
        num_pred,
    }
}

/// Class-agnostic AP_BEV and AP_3D per distance bucket.
pub fn evaluate(preds: &[Label], gt: &[Label], config: &EvalConfig) -> Result<EvalReport> {
    config.validate()?;
    let buckets = config
        .buckets
        .iter()
        .map(|bucket| {
            let bev = run_bucket(preds, gt, bucket, IouKind::Bev, config);
            let d3 = run_bucket(preds, gt, bucket, IouKind::ThreeD, config);
            BucketMetrics {
                bucket: *bucket,
                ap_bev: bev.ap,
                ap_3d: d3.ap,
                recall_bev: bev.recall,
                recall_3d: d3.recall,
                num_gt: gt.iter().filter(|g| bucket.contains(box_distance(&g.bbox))).count(),
                num_pred: bev.num_pred,
            }
        })
        .collect();
    Ok(EvalReport { buckets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::Source;
    use crate::geometry::Point3;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64, z: f64, l: f64, w: f64, h: f64, yaw: f64) -> OrientedBox {
        OrientedBox::new(Point3::new(x, y, z), l, w, h, yaw).unwrap()
    }

    fn label(b: OrientedBox, conf: f64) -> Label {
        Label::new(b, Source::Model, conf, 0).unwrap()
    }

    #[test]
    fn identical_and_disjoint() {
        let a = bx(1.0, 2.0, 0.0, 4.0, 2.0, 1.5, 0.3);
        assert_eq!(bev_iou(&a, &a), 1.0);
        assert_eq!(iou_3d(&a, &a), 1.0);
        let b = bx(20.0, 2.0, 0.0, 4.0, 2.0, 1.5, 0.3);
        assert_eq!(bev_iou(&a, &b), 0.0);
        assert_eq!(iou_3d(&a, &b), 0.0);
    }

    #[test]
    fn axis_aligned_third() {
        let a = bx(0.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0);
        let b = bx(1.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0);
        assert_abs_diff_eq!(bev_intersection_area(&a, &b), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bev_iou(&a, &b), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn vertical_overlap_cases() {
        let a = bx(0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 0.0);
        let b = bx(0.0, 0.0, 1.5, 1.0, 1.0, 1.0, 0.0);
        assert_eq!(iou_3d(&a, &b), 0.0);
        let a = bx(0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 0.0);
        let b = bx(0.0, 0.0, 2.0, 1.0, 1.0, 2.0, 0.0);
        assert_abs_diff_eq!(iou_3d(&a, &b), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn octagon_overlap() {
        // Unit squares sharing a center, 45° apart: overlap is a regular
        // octagon of area 2(√2 - 1).
        let a = bx(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0);
        let b = bx(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, std::f64::consts::FRAC_PI_4);
        let oct = 2.0 * (2f64.sqrt() - 1.0);
        assert_abs_diff_eq!(bev_intersection_area(&a, &b), oct, epsilon = 1e-12);
        assert_abs_diff_eq!(bev_iou(&a, &b), oct / (2.0 - oct), epsilon = 1e-12);
    }

    #[test]
    fn touching_boxes_have_zero_overlap() {
        let a = bx(0.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0);
        let b = bx(2.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0);
        assert_eq!(bev_iou(&a, &b), 0.0);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let gt: Vec<Label> = [5.0, 35.0, 60.0, 70.0]
            .iter()
            .map(|&d| label(bx(d, 1.0, 0.0, 4.0, 2.0, 1.5, 0.1), 1.0))
            .collect();
        let report = evaluate(&gt, &gt, &EvalConfig::default()).unwrap();
        for b in &report.buckets {
            assert_eq!(b.ap_bev, Some(1.0));
            assert_eq!(b.ap_3d, Some(1.0));
        }
    }

    #[test]
    fn no_predictions_and_empty_buckets() {
        let gt = vec![label(bx(5.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0), 1.0)];
        let report = evaluate(&[], &gt, &EvalConfig::default()).unwrap();
        assert_eq!(report.bucket(0.0, 30.0).unwrap().ap_bev, Some(0.0));
        assert_eq!(report.bucket(30.0, 50.0).unwrap().ap_bev, None);
    }

    #[test]
    fn hand_computed_three_gt_case() {
        // Ranked: FP (0.95), TP (0.9), TP (0.8) against 3 GT.
        // Precision 0, 1/2, 2/3 at recall 0, 1/3, 2/3; envelope 2/3 up to
        // recall 2/3 and 0 beyond. 26 of 40 recall points are <= 2/3.
        let gt: Vec<Label> = [5.0, 15.0, 25.0]
            .iter()
            .map(|&d| label(bx(d, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0), 1.0))
            .collect();
        let preds = vec![
            label(bx(5.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0), 0.9),
            label(bx(15.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0), 0.8),
            label(bx(10.0, 10.0, 0.0, 4.0, 2.0, 1.5, 0.0), 0.95),
        ];
        let report = evaluate(&preds, &gt, &EvalConfig::default()).unwrap();
        let expected = 26.0 * (2.0 / 3.0) / 40.0;
        assert_abs_diff_eq!(
            report.bucket(0.0, 30.0).unwrap().ap_bev.unwrap(),
            expected,
            epsilon = 1e-12
        );
        let r11 = EvalConfig {
            recall_points: 11,
            ..EvalConfig::default()
        };
        let report = evaluate(&preds, &gt, &r11).unwrap();
        // Recall points 0.0 ..= 0.6 -> 7 points at 2/3.
        assert_abs_diff_eq!(
            report.bucket(0.0, 30.0).unwrap().ap_bev.unwrap(),
            7.0 * (2.0 / 3.0) / 11.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn ground_truth_side_bucketing() {
        // A prediction just across the bucket edge still matches its GT.
        let gt = vec![label(bx(29.9, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0), 1.0)];
        let preds = vec![label(bx(30.3, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0), 0.9)];
        let pred_side = evaluate(&preds, &gt, &EvalConfig::default()).unwrap();
        assert_eq!(pred_side.bucket(0.0, 30.0).unwrap().ap_bev, Some(0.0));
        let gt_side = EvalConfig {
            bucket_by: BucketSide::GroundTruth,
            ..EvalConfig::default()
        };
        let report = evaluate(&preds, &gt, &gt_side).unwrap();
        assert_eq!(report.bucket(0.0, 30.0).unwrap().ap_bev, Some(1.0));
        assert_eq!(report.bucket(30.0, 50.0).unwrap().num_pred, 0);
    }

    fn arb_box() -> impl Strategy<Value = OrientedBox> {
        (
            -5.0..5.0,
            -5.0..5.0,
            -1.0..1.0,
            0.1..5.0,
            0.1..5.0,
            0.1..3.0,
            -3.2..3.2f64,
        )
            .prop_map(|(x, y, z, l, w, h, yaw)| bx(x, y, z, l, w, h, yaw))
    }

    proptest! {
        #[test]
        fn iou_symmetric_bounded_and_rigid_invariant(
            a in arb_box(), b in arb_box(),
            phi in -3.2..3.2f64, tx in -50.0..50.0f64, ty in -50.0..50.0f64,
        ) {
            let ab = bev_iou(&a, &b);
            prop_assert!((ab - bev_iou(&b, &a)).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            let a3 = iou_3d(&a, &b);
            prop_assert!((a3 - iou_3d(&b, &a)).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&a3));

            let (s, c) = phi.sin_cos();
            let mv = |o: &OrientedBox| OrientedBox {
                center: Point3::new(c * o.center.x - s * o.center.y + tx, s * o.center.x + c * o.center.y + ty, o.center.z),
                yaw: o.yaw + phi,
                ..*o
            };
            prop_assert!((bev_iou(&mv(&a), &mv(&b)) - ab).abs() <= 1e-9);
            prop_assert!((iou_3d(&mv(&a), &mv(&b)) - a3).abs() <= 1e-9);

            let same_z = OrientedBox { center: Point3::new(b.center.x, b.center.y, a.center.z), height: a.height, ..b };
            prop_assert!((iou_3d(&a, &same_z) - bev_iou(&a, &same_z)).abs() <= 1e-12);
            prop_assert!((bev_iou(&a, &a.canonical()) - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn evaluate_ignores_input_order(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng, seq::SliceRandom};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let gt: Vec<Label> = (0..8).map(|_| label(bx(rng.random_range(0.0..70.0), rng.random_range(-5.0..5.0), 0.0, 4.0, 2.0, 1.5, 0.0), 1.0)).collect();
            let mut preds: Vec<Label> = gt.iter().map(|g| {
                let mut p = *g;
                p.bbox.center.x += rng.random_range(-1.5..1.5);
                p.confidence = (rng.random_range(0..4) as f64) / 4.0;
                p
            }).collect();
            let a = evaluate(&preds, &gt, &EvalConfig::default()).unwrap();
            preds.shuffle(&mut rng);
            let b = evaluate(&preds, &gt, &EvalConfig::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
