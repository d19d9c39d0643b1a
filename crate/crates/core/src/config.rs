//! One TOML file carries every tunable. Missing keys take the defaults
//! below; unknown keys are rejected.
//!
//! ```toml
//! [run]
//! seed = 0
//! workers = 0          # 0 = all cores
//! detector = "synthetic"
//!
//! [persistency]
//! neighbor_radius = 0.3
//! smoothing = 1.0
//!
//! [cluster]
//! r_t = 0.5
//! score_eps = 0.1
//! min_pts = 5
//! alpha = 0.7
//! k_percent = 20.0
//!
//! [boxfit]
//! angle_step = 0.017453292519943295   # radians
//! criterion = "closeness"
//! min_points = 5
//! refine = true
//!
//! [lift]
//! grow_radius = 0.5
//! min_cluster = 5
//! min_depth = 0.1
//!
//! [fusion]
//! d_min = 10.0
//!
//! [selfpace]
//! rounds = 10
//! agg_start = 8
//! lambda = 0.999
//! adaptive_sampling = true
//! aggregation = true
//!
//! [groups]
//! near_far = 30.0
//! small_large = 5.0
//!
//! [learner]
//! learning_rate = 0.3
//! saturation = 0.1
//! initial_skills = [0.8, 0.8, 0.8, 0.1]
//!
//! [eval]
//! iou_threshold = 0.25
//! recall_points = 40
//! bucket_by = "prediction"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boxfit::FitParams;
use crate::clustering::ClusterParams;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::fusion::FusionParams;
use crate::lift::LiftParams;
use crate::persistency::PersistencyParams;
use crate::selfpace::{GroupThresholds, RoundConfig, SyntheticLearner};

/// Names the config file when `--config` is absent.
pub const CONFIG_ENV: &str = "AUTOLABEL_CONFIG";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    #[default]
    Synthetic,
    Oracle,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Execution only; left out of echoed configs so outputs do not depend
    /// on it.
    #[serde(skip_serializing)]
    pub workers: usize,
    pub detector: DetectorKind,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunConfig,
    pub persistency: PersistencyParams,
    pub cluster: ClusterParams,
    pub boxfit: FitParams,
    pub lift: LiftParams,
    pub fusion: FusionParams,
    pub selfpace: RoundConfig,
    pub groups: GroupThresholds,
    pub learner: SyntheticLearner,
    pub eval: EvalConfig,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.persistency.validate()?;
        self.cluster.validate()?;
        self.boxfit.validate()?;
        self.lift.validate()?;
        self.fusion.validate()?;
        self.selfpace.validate()?;
        self.eval.validate()?;
        let l = &self.learner;
        if !(0.0..=1.0).contains(&l.learning_rate) || !(l.saturation > 0.0) {
            return Err(Error::Config(
                "learner.learning_rate must lie in [0, 1] and saturation be > 0".into(),
            ));
        }
        if l.initial_skills.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::Config("learner.initial_skills must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: Config = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.learner.thresholds = cfg.groups;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read `path`, else the file named by [`CONFIG_ENV`], else defaults;
    /// then apply `key.path=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let text = match path.map(Path::to_path_buf).or(from_env) {
            Some(p) => std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// `section.key=value`, where value is a TOML literal or a bare string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let value: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in path {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key}: {p} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::from_toml("", &[]).unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.cluster.alpha, 0.7);
        assert_eq!(c.cluster.k_percent, 20.0);
        assert_eq!(c.fusion.d_min, 10.0);
        assert_eq!(
            (c.selfpace.rounds, c.selfpace.agg_start, c.selfpace.lambda),
            (10, 8, 0.999)
        );
        assert_eq!(c.eval.iou_threshold, 0.25);
    }

    #[test]
    fn overrides_beat_the_file() {
        let c = Config::from_toml(
            "[fusion]\nd_min = 5.0\n",
            &["fusion.d_min=12.5".into(), "run.detector=oracle".into()],
        )
        .unwrap();
        assert_eq!(c.fusion.d_min, 12.5);
        assert_eq!(c.run.detector, DetectorKind::Oracle);
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        assert!(Config::from_toml("[cluster]\nalpah = 0.5\n", &[]).is_err());
        assert!(Config::from_toml("[selfpace]\nlambda = 1.5\n", &[]).is_err());
        assert!(Config::from_toml("", &["nonsense".into()]).is_err());
    }

    #[test]
    fn group_thresholds_reach_the_learner() {
        let c = Config::from_toml("[groups]\nnear_far = 40.0\n", &[]).unwrap();
        assert_eq!(c.learner.thresholds.near_far, 40.0);
    }

    #[test]
    fn echo_round_trips() {
        let c = Config::from_toml("[run]\nseed = 9\n", &[]).unwrap();
        assert_eq!(Config::from_toml(&c.to_toml(), &[]).unwrap(), c);
        let w = Config::from_toml("[run]\nworkers = 8\n", &[]).unwrap();
        assert!(!w.to_toml().contains("workers"));
    }
}
