//! Distance–volume grouping and distribution-driven resampling.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{box_distance, Label};
use crate::geometry::{box_volume, OrientedBox};
use crate::rng::keyed_uniform;

/// One value per group, indexed by [`GroupId::index`].
pub type GroupVec = [f64; 4];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceClass {
    Near,
    Far,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeClass {
    Small,
    Large,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupId {
    pub distance: DistanceClass,
    pub volume: VolumeClass,
}

impl GroupId {
    /// Report order: near-large, near-small, far-large, far-small.
    pub const ALL: [GroupId; 4] = [
        GroupId::new(DistanceClass::Near, VolumeClass::Large),
        GroupId::new(DistanceClass::Near, VolumeClass::Small),
        GroupId::new(DistanceClass::Far, VolumeClass::Large),
        GroupId::new(DistanceClass::Far, VolumeClass::Small),
    ];

    pub const fn new(distance: DistanceClass, volume: VolumeClass) -> Self {
        Self { distance, volume }
    }

    pub fn index(self) -> usize {
        match (self.distance, self.volume) {
            (DistanceClass::Near, VolumeClass::Large) => 0,
            (DistanceClass::Near, VolumeClass::Small) => 1,
            (DistanceClass::Far, VolumeClass::Large) => 2,
            (DistanceClass::Far, VolumeClass::Small) => 3,
        }
    }

    pub fn name(self) -> &'static str {
        ["near-large", "near-small", "far-large", "far-small"][self.index()]
    }
}

/// Group boundaries. Values on a boundary go to the far / large class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupThresholds {
    pub near_far: f64,
    pub small_large: f64,
}

impl Default for GroupThresholds {
    fn default() -> Self {
        Self {
            near_far: 30.0,
            small_large: 5.0,
        }
    }
}

impl GroupThresholds {
    pub fn group_of(&self, b: &OrientedBox) -> GroupId {
        let distance = if box_distance(b) < self.near_far {
            DistanceClass::Near
        } else {
            DistanceClass::Far
        };
        let volume = if box_volume(b) < self.small_large {
            VolumeClass::Small
        } else {
            VolumeClass::Large
        };
        GroupId::new(distance, volume)
    }
}

pub fn assign_group(label: &Label, thresholds: &GroupThresholds) -> GroupId {
    thresholds.group_of(&label.bbox)
}

pub fn group_counts(labels: &[Label], thresholds: &GroupThresholds) -> [usize; 4] {
    let mut counts = [0usize; 4];
    for l in labels {
        counts[assign_group(l, thresholds).index()] += 1;
    }
    counts
}

/// Fraction of labels in each group.
pub fn distribution(labels: &[Label], thresholds: &GroupThresholds) -> Result<GroupVec> {
    if labels.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let n = labels.len() as f64;
    Ok(group_counts(labels, thresholds).map(|c| c as f64 / n))
}

fn check_probability(name: &str, v: &GroupVec) -> Result<()> {
    if v.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Validation(format!("{name} has entries outside [0, 1]: {v:?}")));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!("{name} sums to {sum}, expected 1")));
    }
    Ok(())
}

/// Upper branch of the sampling score, used when a group's share grew.
pub fn sampling_score_grown(q_init: f64, q: f64) -> f64 {
    1.0 - (q - q_init)
}

/// Lower branch, used when a group's share shrank or held.
pub fn sampling_score_shrunk(q_init: f64, q: f64) -> f64 {
    1.0 + (q_init - q)
}

/// Per-group sampling scores from the initial and inferred distributions.
/// Both branches reduce to `1 + q_init - q`.
pub fn sampling_scores(q_init: &GroupVec, q: &GroupVec) -> Result<GroupVec> {
    check_probability("initial distribution", q_init)?;
    check_probability("inference distribution", q)?;
    Ok(std::array::from_fn(|g| {
        if q[g] > q_init[g] {
            sampling_score_grown(q_init[g], q[g])
        } else {
            sampling_score_shrunk(q_init[g], q[g])
        }
    }))
}

/// Keep each label with probability `R(g)` when `R(g) <= 1`; otherwise keep
/// it and add a copy with probability `R(g) - 1`. The draw for a label is
/// keyed by `(seed, frame, index of the label within its frame)`, so the
/// outcome does not depend on how frames are ordered or sharded. Copies
/// directly follow their original.
pub fn resample(labels: &[Label], scores: &GroupVec, thresholds: &GroupThresholds, seed: u64) -> Vec<Label> {
    let mut per_frame: HashMap<u32, u64> = HashMap::new();
    let mut out = Vec::with_capacity(labels.len());
    for l in labels {
        let slot = per_frame.entry(l.frame).or_insert(0);
        let idx = *slot;
        *slot += 1;
        let r = scores[assign_group(l, thresholds).index()];
        let u = keyed_uniform(&[seed, l.frame as u64, idx]);
        if r <= 1.0 {
            if u < r {
                out.push(*l);
            }
        } else {
            out.push(*l);
            if u < r - 1.0 {
                out.push(*l);
            }
        }
    }
    out
}
