//! Detector interface plus two deterministic stand-ins: a skill-based
//! synthetic learner and a ground-truth oracle.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::aggregate::ModelWeights;
use super::groups::{group_counts, GroupThresholds, GroupVec};
use crate::error::{Error, Result};
use crate::fusion::{box_distance, Label, Source};
use crate::geometry::{OrientedBox, Point3};
use crate::rng::keyed_rng;

/// The objects actually present in one frame, visible only to simulated
/// detectors.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentFrame {
    pub id: u32,
    pub objects: Vec<OrientedBox>,
}

impl LatentFrame {
    pub fn ground_truth(&self) -> Vec<Label> {
        self.objects
            .iter()
            .map(|&bbox| Label {
                bbox,
                source: Source::Truth,
                confidence: 1.0,
                frame: self.id,
            })
            .collect()
    }
}

/// A trainable 3D detector. Both operations must be deterministic for a
/// fixed seed and inputs.
pub trait Detector: Sync {
    fn name(&self) -> &'static str;

    fn initial_weights(&self) -> ModelWeights;

    fn train(&self, labels: &[Label], init: &ModelWeights, seed: u64) -> Result<ModelWeights>;

    fn infer(&self, frame: &LatentFrame, weights: &ModelWeights, seed: u64) -> Result<Vec<Label>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxNoise {
    pub position: f64,
    /// Relative standard deviation of each dimension.
    pub dimension: f64,
    /// Radians.
    pub yaw: f64,
}

impl Default for BoxNoise {
    fn default() -> Self {
        Self {
            position: 0.2,
            dimension: 0.05,
            yaw: 2f64.to_radians(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticLearner {
    pub learning_rate: f64,
    pub saturation: f64,
    /// Skills before seed training, in group report order.
    pub initial_skills: GroupVec,
    pub noise: BoxNoise,
    /// Taken from the `groups` config section, not from this one.
    #[serde(skip)]
    pub thresholds: GroupThresholds,
}

impl Default for SyntheticLearner {
    fn default() -> Self {
        Self {
            learning_rate: 0.3,
            saturation: 0.1,
            initial_skills: [0.8, 0.8, 0.8, 0.1],
            noise: BoxNoise::default(),
            thresholds: GroupThresholds::default(),
        }
    }
}

/// Move each skill toward `f / (f + saturation)`, where `f` is the share of
/// training labels in that group.
pub fn learner_train(
    skills: &GroupVec,
    labels: &[Label],
    learning_rate: f64,
    saturation: f64,
    thresholds: &GroupThresholds,
) -> Result<GroupVec> {
    if labels.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let counts = group_counts(labels, thresholds);
    let n = labels.len() as f64;
    Ok(std::array::from_fn(|g| {
        let f = counts[g] as f64 / n;
        ((1.0 - learning_rate) * skills[g] + learning_rate * f / (f + saturation)).clamp(0.0, 1.0)
    }))
}

/// Emit the `⌈s_g · n_g⌉` objects of each group nearest the ego, perturbed
/// by seeded Gaussian noise and scored with the group's skill.
pub fn learner_infer(
    frame: &LatentFrame,
    skills: &GroupVec,
    noise: &BoxNoise,
    thresholds: &GroupThresholds,
    seed: u64,
) -> Result<Vec<Label>> {
    let mut by_group: [Vec<usize>; 4] = Default::default();
    for (i, b) in frame.objects.iter().enumerate() {
        by_group[thresholds.group_of(b).index()].push(i);
    }
    let mut chosen = Vec::new();
    for (g, members) in by_group.iter_mut().enumerate() {
        members.sort_by(|&a, &b| {
            box_distance(&frame.objects[a])
                .total_cmp(&box_distance(&frame.objects[b]))
                .then(a.cmp(&b))
        });
        let quota = ((skills[g] * members.len() as f64) - 1e-9).ceil().max(0.0) as usize;
        chosen.extend(members.iter().take(quota).map(|&i| (i, skills[g])));
    }
    chosen.sort_by_key(|&(i, _)| i);

    let std = Normal::new(0.0, 1.0).expect("unit normal");
    chosen
        .into_iter()
        .map(|(i, confidence)| {
            let truth = &frame.objects[i];
            let mut rng = keyed_rng(&[seed, frame.id as u64, i as u64]);
            let mut z = || std.sample(&mut rng);
            let scale = |v: f64, z: f64| (v * (1.0 + noise.dimension * z)).max(0.05);
            let bbox = OrientedBox::new(
                Point3::new(
                    truth.center.x + noise.position * z(),
                    truth.center.y + noise.position * z(),
                    truth.center.z + noise.position * z(),
                ),
                scale(truth.length, z()),
                scale(truth.width, z()),
                scale(truth.height, z()),
                truth.yaw + noise.yaw * z(),
            )?;
            Label::new(bbox, Source::Model, confidence, frame.id)
        })
        .collect()
}

impl Detector for SyntheticLearner {
    fn name(&self) -> &'static str {
        "synthetic"
    }

    fn initial_weights(&self) -> ModelWeights {
        ModelWeights(self.initial_skills.to_vec())
    }

    fn train(&self, labels: &[Label], init: &ModelWeights, _seed: u64) -> Result<ModelWeights> {
        let skills = skills_of(init)?;
        let next = learner_train(&skills, labels, self.learning_rate, self.saturation, &self.thresholds)?;
        Ok(ModelWeights(next.to_vec()))
    }

    fn infer(&self, frame: &LatentFrame, weights: &ModelWeights, seed: u64) -> Result<Vec<Label>> {
        learner_infer(frame, &skills_of(weights)?, &self.noise, &self.thresholds, seed)
    }
}

fn skills_of(w: &ModelWeights) -> Result<GroupVec> {
    <GroupVec>::try_from(w.as_slice()).map_err(|_| Error::DimensionMismatch {
        expected: 4,
        got: w.len(),
    })
}

/// Returns every latent object exactly with confidence 1; training is a
/// no-op.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleDetector;

impl Detector for OracleDetector {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn initial_weights(&self) -> ModelWeights {
        ModelWeights(Vec::new())
    }

    fn train(&self, _labels: &[Label], init: &ModelWeights, _seed: u64) -> Result<ModelWeights> {
        Ok(init.clone())
    }

    fn infer(&self, frame: &LatentFrame, _weights: &ModelWeights, _seed: u64) -> Result<Vec<Label>> {
        Ok(frame
            .ground_truth()
            .into_iter()
            .map(|l| Label {
                source: Source::Model,
                ..l
            })
            .collect())
    }
}
