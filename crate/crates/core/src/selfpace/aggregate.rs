//! Weight averaging of per-round models into the running strong model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat parameter vector of a detector.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelWeights(pub Vec<f64>);

impl ModelWeights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let w = Self(values);
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        match self.0.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::Validation(format!("weight {i} is not finite"))),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundConfig {
    /// Total self-training rounds `T`.
    pub rounds: usize,
    /// First round `T_s` that averages instead of replacing.
    pub agg_start: usize,
    pub lambda: f64,
    /// Resample pseudo labels by group sampling score each round.
    pub adaptive_sampling: bool,
    /// Average weak models from `agg_start` on; off means `Θ_t = θ_t`.
    pub aggregation: bool,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self {
            rounds: 10,
            agg_start: 8,
            lambda: 0.999,
            adaptive_sampling: true,
            aggregation: true,
        }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds > 0 && !(1 <= self.agg_start && self.agg_start <= self.rounds) {
            return Err(Error::Config(format!(
                "selfpace.agg_start must lie in [1, {}], got {}",
                self.rounds, self.agg_start
            )));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config("selfpace.lambda must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Strong model for round `t`: the weak model itself before `agg_start`,
/// `λ·previous + (1-λ)·current` from then on.
pub fn aggregate(
    previous: &ModelWeights,
    current: &ModelWeights,
    t: usize,
    config: &RoundConfig,
) -> Result<ModelWeights> {
    if previous.len() != current.len() {
        return Err(Error::DimensionMismatch {
            expected: previous.len(),
            got: current.len(),
        });
    }
    if t < 1 || t > config.rounds {
        return Err(Error::Validation(format!("round {t} outside 1..={}", config.rounds)));
    }
    if !config.aggregation || t < config.agg_start {
        return Ok(current.clone());
    }
    let lambda = config.lambda;
    Ok(ModelWeights(
        previous
            .0
            .iter()
            .zip(&current.0)
            .map(|(p, c)| lambda * p + (1.0 - lambda) * c)
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn before_start_passes_weak_model_through() {
        let cfg = RoundConfig::default();
        let prev = ModelWeights(vec![9.0; 4]);
        let cur = ModelWeights(vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(aggregate(&prev, &cur, 3, &cfg).unwrap(), cur);
    }

    #[test]
    fn start_round_averages() {
        let cfg = RoundConfig::default();
        let out = aggregate(&ModelWeights(vec![1.0; 4]), &ModelWeights(vec![0.0; 4]), 8, &cfg).unwrap();
        for v in out.0 {
            assert_abs_diff_eq!(v, 0.999, epsilon = 1e-15);
        }
    }

    #[test]
    fn fixed_point() {
        let w = ModelWeights(vec![0.3, -2.0, 7.5]);
        for lambda in [0.5, 0.9, 0.999] {
            let cfg = RoundConfig {
                lambda,
                ..RoundConfig::default()
            };
            let out = aggregate(&w, &w, 9, &cfg).unwrap();
            for (a, b) in out.0.iter().zip(&w.0) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let cfg = RoundConfig::default();
        assert!(matches!(
            aggregate(&ModelWeights(vec![1.0; 3]), &ModelWeights(vec![1.0; 4]), 9, &cfg),
            Err(Error::DimensionMismatch { expected: 3, got: 4 })
        ));
    }

    #[test]
    fn config_bounds() {
        let bad = RoundConfig {
            agg_start: 11,
            ..RoundConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = RoundConfig {
            lambda: 1.0,
            ..RoundConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
