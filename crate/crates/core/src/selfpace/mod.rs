//! Self-paced training: seed training on fused pseudo labels, then rounds
//! of inference, group-balanced resampling, warm-started retraining and
//! weight aggregation.

mod aggregate;
mod groups;
mod learner;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate, ModelWeights, RoundConfig};
pub use groups::{
    assign_group, distribution, group_counts, resample, sampling_score_grown, sampling_score_shrunk, sampling_scores,
    DistanceClass, GroupId, GroupThresholds, GroupVec, VolumeClass,
};
pub use learner::{learner_infer, learner_train, BoxNoise, Detector, LatentFrame, OracleDetector, SyntheticLearner};

use crate::error::{Error, Result};
use crate::eval::{evaluate, greedy_match, rank_predictions, EvalConfig, IouKind};
use crate::fusion::Label;
use crate::rng::keyed_u64;

/// Inputs of a self-paced run.
#[derive(Clone, Debug)]
pub struct SelfPacedData {
    /// Fused seed labels over the training frames.
    pub seed_labels: Vec<Label>,
    pub train_frames: Vec<LatentFrame>,
    pub eval_frames: Vec<LatentFrame>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketSummary {
    pub ap_bev: Option<f64>,
    pub ap_3d: Option<f64>,
    pub num_gt: usize,
    pub num_pred: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    /// Widest bucket.
    pub ap_bev: Option<f64>,
    pub ap_3d: Option<f64>,
    pub per_bucket: BTreeMap<String, BucketSummary>,
    /// BEV recall per distance–volume group, in group report order.
    pub group_recall: [Option<f64>; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    #[serde(rename = "Q_init")]
    pub q_init: GroupVec,
    /// `None` in the seed stage and in degenerate rounds.
    #[serde(rename = "Q")]
    pub q: Option<GroupVec>,
    #[serde(rename = "R")]
    pub r: Option<GroupVec>,
    /// Strong (aggregated) model after this round.
    pub weights: Vec<f64>,
    pub weak_weights: Vec<f64>,
    pub metrics: RoundMetrics,
    pub weak_metrics: RoundMetrics,
    pub num_pseudo: usize,
    pub num_train: usize,
    pub degenerate: bool,
    /// Each weak model is trained from the previous weak model.
    pub warm_start: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelfPacedRun {
    /// Round 0 is the seed stage; rounds `1..=T` follow.
    pub reports: Vec<RoundReport>,
    pub final_weights: ModelWeights,
}

/// BEV recall of ground truth per group.
pub fn group_recall(
    preds: &[Label],
    gt: &[Label],
    thresholds: &GroupThresholds,
    iou_threshold: f64,
) -> [Option<f64>; 4] {
    let ranked = rank_predictions(preds);
    let all: Vec<usize> = (0..gt.len()).collect();
    let matches = greedy_match(preds, &ranked, gt, &all, IouKind::Bev, iou_threshold);
    let mut hit = [0usize; 4];
    for g in matches.into_iter().flatten() {
        hit[assign_group(&gt[g], thresholds).index()] += 1;
    }
    let total = group_counts(gt, thresholds);
    std::array::from_fn(|g| (total[g] > 0).then(|| hit[g] as f64 / total[g] as f64))
}

fn infer_split(
    detector: &dyn Detector,
    frames: &[LatentFrame],
    weights: &ModelWeights,
    seed: u64,
) -> Result<Vec<Label>> {
    let per_frame: Vec<Vec<Label>> = frames
        .par_iter()
        .map(|f| detector.infer(f, weights, seed))
        .collect::<Result<_>>()?;
    Ok(per_frame.into_iter().flatten().collect())
}

fn measure(
    detector: &dyn Detector,
    data: &SelfPacedData,
    weights: &ModelWeights,
    eval: &EvalConfig,
    thresholds: &GroupThresholds,
    seed: u64,
) -> Result<RoundMetrics> {
    let preds = infer_split(detector, &data.eval_frames, weights, seed)?;
    let gt: Vec<Label> = data.eval_frames.iter().flat_map(LatentFrame::ground_truth).collect();
    let report = evaluate(&preds, &gt, eval)?;
    let full = report.full_range();
    Ok(RoundMetrics {
        ap_bev: full.and_then(|b| b.ap_bev),
        ap_3d: full.and_then(|b| b.ap_3d),
        per_bucket: report
            .buckets
            .iter()
            .map(|b| {
                (
                    b.bucket.name(),
                    BucketSummary {
                        ap_bev: b.ap_bev,
                        ap_3d: b.ap_3d,
                        num_gt: b.num_gt,
                        num_pred: b.num_pred,
                    },
                )
            })
            .collect(),
        group_recall: group_recall(&preds, &gt, thresholds, eval.iou_threshold),
    })
}

/// Run seed training and `config.rounds` self-training rounds.
pub fn run_self_paced(
    data: &SelfPacedData,
    detector: &dyn Detector,
    config: &RoundConfig,
    thresholds: &GroupThresholds,
    eval: &EvalConfig,
    seed: u64,
) -> Result<SelfPacedRun> {
    config.validate()?;
    eval.validate()?;
    let q_init = distribution(&data.seed_labels, thresholds)?;
    let eval_seed = keyed_u64(&[seed, 0xe7a1]);

    let seed_model = detector.train(&data.seed_labels, &detector.initial_weights(), keyed_u64(&[seed, 0]))?;
    let seed_metrics = measure(detector, data, &seed_model, eval, thresholds, eval_seed)?;
    let mut reports = vec![RoundReport {
        round: 0,
        q_init,
        q: None,
        r: None,
        weights: seed_model.0.clone(),
        weak_weights: seed_model.0.clone(),
        metrics: seed_metrics.clone(),
        weak_metrics: seed_metrics,
        num_pseudo: data.seed_labels.len(),
        num_train: data.seed_labels.len(),
        degenerate: false,
        warm_start: true,
    }];

    let mut strong = seed_model.clone();
    let mut weak = seed_model;
    let mut train_labels = data.seed_labels.clone();
    for t in 1..=config.rounds {
        let round_seed = keyed_u64(&[seed, t as u64]);
        let pseudo = infer_split(detector, &data.train_frames, &strong, round_seed)?;
        let (q, r, degenerate) = match distribution(&pseudo, thresholds) {
            Ok(q) => {
                let r = if config.adaptive_sampling {
                    sampling_scores(&q_init, &q)?
                } else {
                    [1.0; 4]
                };
                train_labels = resample(&pseudo, &r, thresholds, round_seed);
                (Some(q), Some(r), false)
            }
            Err(Error::EmptyDistribution) => {
                log::warn!("round {t}: no pseudo labels, reusing the previous training set");
                (None, None, true)
            }
            Err(e) => return Err(e),
        };
        if train_labels.is_empty() {
            log::warn!("round {t}: resampling removed every label, reusing the unresampled set");
            train_labels = pseudo.clone();
        }
        weak = detector.train(&train_labels, &weak, keyed_u64(&[round_seed, 1]))?;
        strong = aggregate(&strong, &weak, t, config)?;
        reports.push(RoundReport {
            round: t,
            q_init,
            q,
            r,
            weights: strong.0.clone(),
            weak_weights: weak.0.clone(),
            metrics: measure(detector, data, &strong, eval, thresholds, eval_seed)?,
            weak_metrics: measure(detector, data, &weak, eval, thresholds, eval_seed)?,
            num_pseudo: pseudo.len(),
            num_train: train_labels.len(),
            degenerate,
            warm_start: true,
        });
    }
    Ok(SelfPacedRun {
        reports,
        final_weights: strong,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{OrientedBox, Point3};

    fn frames(n: u32, per: usize) -> Vec<LatentFrame> {
        (0..n)
            .map(|id| LatentFrame {
                id,
                objects: (0..per)
                    .map(|i| {
                        let d = 5.0 + 8.0 * i as f64 + id as f64 * 0.1;
                        let dims = if i % 2 == 0 { (4.5, 1.8, 1.5) } else { (0.7, 0.7, 1.7) };
                        OrientedBox::new(Point3::new(d, 2.0, 0.0), dims.0, dims.1, dims.2, 0.1).unwrap()
                    })
                    .collect(),
            })
            .collect()
    }

    fn data() -> SelfPacedData {
        let train = frames(6, 9);
        let seed_labels = train.iter().flat_map(LatentFrame::ground_truth).collect();
        SelfPacedData {
            seed_labels,
            train_frames: train,
            eval_frames: frames(3, 9)
                .into_iter()
                .map(|mut f| {
                    f.id += 100;
                    f
                })
                .collect(),
        }
    }

    #[test]
    fn zero_rounds_reports_seed_stage_only() {
        let cfg = RoundConfig {
            rounds: 0,
            ..RoundConfig::default()
        };
        let run = run_self_paced(
            &data(),
            &SyntheticLearner::default(),
            &cfg,
            &GroupThresholds::default(),
            &EvalConfig::default(),
            1,
        )
        .unwrap();
        assert_eq!(run.reports.len(), 1);
        assert_eq!(run.final_weights.0, run.reports[0].weights);
    }

    #[test]
    fn oracle_keeps_scores_at_one() {
        let run = run_self_paced(
            &data(),
            &OracleDetector,
            &RoundConfig::default(),
            &GroupThresholds::default(),
            &EvalConfig::default(),
            5,
        )
        .unwrap();
        for rep in &run.reports[1..] {
            assert_eq!(rep.r, Some([1.0; 4]));
            assert_eq!(rep.q, Some(rep.q_init));
        }
    }

    #[test]
    fn empty_inference_is_degenerate_not_fatal() {
        let learner = SyntheticLearner {
            initial_skills: [0.0; 4],
            learning_rate: 0.0,
            ..SyntheticLearner::default()
        };
        let cfg = RoundConfig {
            rounds: 2,
            agg_start: 2,
            ..RoundConfig::default()
        };
        let run = run_self_paced(
            &data(),
            &learner,
            &cfg,
            &GroupThresholds::default(),
            &EvalConfig::default(),
            5,
        )
        .unwrap();
        assert!(run.reports[1..].iter().all(|r| r.degenerate && r.q.is_none()));
    }

    #[test]
    fn run_is_reproducible() {
        let d = data();
        let a = run_self_paced(
            &d,
            &SyntheticLearner::default(),
            &RoundConfig::default(),
            &GroupThresholds::default(),
            &EvalConfig::default(),
            11,
        )
        .unwrap();
        let b = run_self_paced(
            &d,
            &SyntheticLearner::default(),
            &RoundConfig::default(),
            &GroupThresholds::default(),
            &EvalConfig::default(),
            11,
        )
        .unwrap();
        assert_eq!(a, b);
    }
}
