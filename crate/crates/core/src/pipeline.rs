//! The end-to-end chain over a loaded dataset, and the files it writes.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::boxfit::{fit_box, FitParams};
use crate::clustering::{foreground_clusters, ClusterParams};
use crate::config::{Config, DetectorKind};
use crate::error::{Error, Result};
use crate::eval::{evaluate, BucketMetrics, EvalReport};
use crate::fusion::{fuse_labels, FusionParams, Label, Source};
use crate::geometry::{transform_to_world, PointCloud};
use crate::io::{save_labels, write_json, write_jsonl, write_sidecar, Dataset, FrameData};
use crate::lift::lift_frame;
use crate::persistency::{score_cloud, PersistencyParams, TraversalSet};
use crate::selfpace::{
    run_self_paced, Detector, LatentFrame, OracleDetector, RoundReport, SelfPacedData, SelfPacedRun,
};
use crate::synth::Split;

/// Run `f` on a pool of `workers` threads (0 = one per core). Results do
/// not depend on the worker count.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// The current traversal's cloud, in its sensor frame, with persistency
/// scores computed against all traversals in the world frame.
pub fn score_frame(frame: &FrameData, params: &PersistencyParams) -> Result<PointCloud> {
    let world = frame
        .scans
        .iter()
        .map(|s| transform_to_world(&s.cloud, &s.pose))
        .collect::<Result<Vec<_>>>()?;
    let current = world[0].clone();
    let scored = score_cloud(&current, &TraversalSet::new(world)?, params)?;
    PointCloud::with_scores(frame.scans[0].cloud.points.clone(), scored.scores.unwrap_or_default())
}

/// One box per non-static cluster. Clusters too small to fit are skipped.
pub fn lidar_labels(scored: &PointCloud, cluster: &ClusterParams, fit: &FitParams, frame: u32) -> Result<Vec<Label>> {
    let clusters = foreground_clusters(scored, cluster)?;
    let fits: Vec<Option<Label>> = clusters
        .par_iter()
        .map(|members| match fit_box(&scored.select(members), fit) {
            Ok(f) => Label::new(f.bbox, Source::Lidar, 1.0, frame).map(Some),
            Err(Error::TooFewPoints { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    Ok(fits.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameLabels {
    pub frame: u32,
    pub split: Split,
    pub lidar: Vec<Label>,
    pub image: Vec<Label>,
    pub fused: Vec<Label>,
}

pub fn label_frame(frame: &FrameData, config: &Config) -> Result<FrameLabels> {
    let scored = score_frame(frame, &config.persistency)?;
    let lidar = lidar_labels(&scored, &config.cluster, &config.boxfit, frame.id)?;
    let image = lift_frame(
        &frame.scans[0].cloud,
        &frame.camera,
        &frame.masks,
        &config.lift,
        &config.boxfit,
        frame.id,
    )?;
    let fused = fuse_labels(&lidar, &image, &config.fusion)?;
    Ok(FrameLabels {
        frame: frame.id,
        split: frame.split,
        lidar,
        image,
        fused,
    })
}

/// Fuse pooled label sets frame by frame; output is ordered by frame id,
/// LiDAR labels first within a frame.
pub fn fuse_by_frame(lidar: &[Label], image: &[Label], params: &FusionParams) -> Result<Vec<Label>> {
    let mut frames: BTreeMap<u32, (Vec<Label>, Vec<Label>)> = BTreeMap::new();
    for l in lidar {
        frames.entry(l.frame).or_default().0.push(*l);
    }
    for l in image {
        frames.entry(l.frame).or_default().1.push(*l);
    }
    let mut out = Vec::new();
    for (li, im) in frames.values() {
        out.extend(fuse_labels(li, im, params)?);
    }
    Ok(out)
}

/// Seed labels for every frame, in dataset order.
pub fn label_dataset(dataset: &Dataset, config: &Config) -> Result<Vec<FrameLabels>> {
    dataset.frames.par_iter().map(|f| label_frame(f, config)).collect()
}

pub fn latent_frames(dataset: &Dataset, split: Split) -> Vec<LatentFrame> {
    dataset
        .frame_ids(split)
        .into_iter()
        .map(|id| LatentFrame {
            id,
            objects: dataset.ground_truth_of(id).iter().map(|l| l.bbox).collect(),
        })
        .collect()
}

pub fn detector_for(config: &Config) -> Box<dyn Detector> {
    match config.run.detector {
        DetectorKind::Synthetic => Box::new(config.learner.clone()),
        DetectorKind::Oracle => Box::new(OracleDetector),
    }
}

pub fn self_paced_data(dataset: &Dataset, seed_labels: Vec<Label>) -> Result<SelfPacedData> {
    if dataset.ground_truth.is_empty() {
        return Err(Error::Precondition(
            "self-paced training needs ground truth for the simulated detector and the held-out split".into(),
        ));
    }
    let train_frames = latent_frames(dataset, Split::Train);
    let eval_frames = latent_frames(dataset, Split::Eval);
    if eval_frames.is_empty() {
        return Err(Error::Precondition("dataset has no eval frames".into()));
    }
    Ok(SelfPacedData {
        seed_labels,
        train_frames,
        eval_frames,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedMetrics {
    pub lidar: EvalReport,
    pub image: EvalReport,
    pub fused: EvalReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub frames: Vec<FrameLabels>,
    /// Seed label quality against ground truth over all frames.
    pub seed_metrics: SeedMetrics,
    pub selfpace: SelfPacedRun,
}

fn pooled(frames: &[FrameLabels], pick: impl Fn(&FrameLabels) -> &[Label]) -> Vec<Label> {
    frames.iter().flat_map(|f| pick(f).iter().copied()).collect()
}

/// Label every frame, score the seed labels, then run self-paced training
/// on the fused labels of the training split.
pub fn run_pipeline(dataset: &Dataset, config: &Config) -> Result<RunOutput> {
    config.validate()?;
    let frames = label_dataset(dataset, config)?;
    let gt = &dataset.ground_truth;
    let seed_metrics = SeedMetrics {
        lidar: evaluate(&pooled(&frames, |f| &f.lidar), gt, &config.eval)?,
        image: evaluate(&pooled(&frames, |f| &f.image), gt, &config.eval)?,
        fused: evaluate(&pooled(&frames, |f| &f.fused), gt, &config.eval)?,
    };
    let train_fused: Vec<Label> = frames
        .iter()
        .filter(|f| f.split == Split::Train)
        .flat_map(|f| f.fused.iter().copied())
        .collect();
    let data = self_paced_data(dataset, train_fused)?;
    let detector = detector_for(config);
    let selfpace = run_self_paced(
        &data,
        detector.as_ref(),
        &config.selfpace,
        &config.groups,
        &config.eval,
        config.run.seed,
    )?;
    Ok(RunOutput {
        frames,
        seed_metrics,
        selfpace,
    })
}

#[derive(Serialize)]
pub struct Provenance<'a> {
    pub config: &'a Config,
}

#[derive(Serialize)]
struct BucketOut {
    ap_bev: Option<f64>,
    ap_3d: Option<f64>,
    recall_bev: Option<f64>,
    recall_3d: Option<f64>,
    num_gt: usize,
    num_pred: usize,
}

#[derive(Serialize)]
pub struct MetricsFile<'a> {
    per_bucket: BTreeMap<String, BucketOut>,
    config: &'a Config,
}

impl<'a> MetricsFile<'a> {
    pub fn new(report: &EvalReport, config: &'a Config) -> Self {
        let out = |b: &BucketMetrics| BucketOut {
            ap_bev: b.ap_bev,
            ap_3d: b.ap_3d,
            recall_bev: b.recall_bev,
            recall_3d: b.recall_3d,
            num_gt: b.num_gt,
            num_pred: b.num_pred,
        };
        Self {
            per_bucket: report.buckets.iter().map(|b| (b.bucket.name(), out(b))).collect(),
            config,
        }
    }
}

#[derive(Serialize)]
struct WeightsFile<'a> {
    detector: &'static str,
    weights: &'a [f64],
    config: &'a Config,
}

/// Labels with a config sidecar.
pub fn write_labels(path: &Path, labels: &[Label], config: &Config) -> Result<()> {
    save_labels(path, labels)?;
    write_sidecar(path, &Provenance { config })
}

pub fn write_metrics(path: &Path, report: &EvalReport, config: &Config) -> Result<()> {
    write_json(path, &MetricsFile::new(report, config))
}

pub fn write_rounds(dir: &Path, run: &SelfPacedRun, detector: &'static str, config: &Config) -> Result<()> {
    let rounds = dir.join("rounds.jsonl");
    write_jsonl::<RoundReport>(&rounds, &run.reports)?;
    write_sidecar(&rounds, &Provenance { config })?;
    write_json(
        &dir.join("weights.json"),
        &WeightsFile {
            detector,
            weights: run.final_weights.as_slice(),
            config,
        },
    )
}

/// Layout: `labels/{lidar,image,fused}.jsonl`, `metrics/seed_*.json`,
/// `selfpace/rounds.jsonl`, `selfpace/weights.json`, `config.toml`.
pub fn write_run(dir: &Path, out: &RunOutput, config: &Config) -> Result<()> {
    for (name, pick) in [
        (
            "lidar",
            (|f: &FrameLabels| f.lidar.as_slice()) as fn(&FrameLabels) -> &[Label],
        ),
        ("image", |f| f.image.as_slice()),
        ("fused", |f| f.fused.as_slice()),
    ] {
        write_labels(
            &dir.join(format!("labels/{name}.jsonl")),
            &pooled(&out.frames, pick),
            config,
        )?;
    }
    let m = &out.seed_metrics;
    for (name, report) in [("lidar", &m.lidar), ("image", &m.image), ("fused", &m.fused)] {
        write_metrics(&dir.join(format!("metrics/seed_{name}.json")), report, config)?;
    }
    write_rounds(
        &dir.join("selfpace"),
        &out.selfpace,
        detector_for(config).name(),
        config,
    )?;
    crate::io::write_atomic(&dir.join("config.toml"), config.to_toml().as_bytes())
}
