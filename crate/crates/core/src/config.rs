use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RETENTION_RATIO: f64 = 0.25;
pub const DEFAULT_TAU: f64 = 0.95;
pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_KNN: usize = 5;
pub const DEFAULT_BETA: f64 = 1.0;

/// Hyperparameters for the whole pruning pipeline.
///
/// `beta` and `seed` are only consumed by evaluation and synthesis; the
/// pruning path itself is deterministic and never draws random numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub retention_ratio: f64,
    pub min_ratio: f64,
    pub tau: f64,
    pub lambda: f64,
    pub beta: f64,
    pub knn: usize,
    pub normalize_tokens: bool,
    pub seed: u64,
}

impl PruneConfig {
    /// Defaults for a given retention ratio; `min_ratio` is half of it.
    pub fn new(retention_ratio: f64) -> Self {
        Self {
            retention_ratio,
            min_ratio: retention_ratio / 2.0,
            tau: DEFAULT_TAU,
            lambda: DEFAULT_LAMBDA,
            beta: DEFAULT_BETA,
            knn: DEFAULT_KNN,
            normalize_tokens: true,
            seed: 0,
        }
    }

    /// Discretionary budget above the floor, `R - R_min`.
    pub fn extra_ratio(&self) -> f64 {
        self.retention_ratio - self.min_ratio
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.retention_ratio;
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "retention ratio must lie in (0, 1], got {r}"
            )));
        }
        if !(self.min_ratio > 0.0 && self.min_ratio <= r) {
            return Err(Error::InvalidConfig(format!(
                "min ratio must lie in (0, {r}], got {}",
                self.min_ratio
            )));
        }
        if !(self.tau > -1.0 && self.tau <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tau must lie in (-1, 1], got {}",
                self.tau
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "beta must be a finite value >= 0, got {}",
                self.beta
            )));
        }
        if self.knn == 0 {
            return Err(Error::InvalidConfig("knn must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self::new(DEFAULT_RETENTION_RATIO)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_operating_point() {
        let c = PruneConfig::new(0.25);
        assert_eq!(c.tau, 0.95);
        assert_eq!(c.lambda, 0.5);
        assert_eq!(c.min_ratio, 0.125);
        assert_eq!(c.knn, 5);
        assert!(c.normalize_tokens);
        assert_eq!(c.beta, 1.0);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_out_of_range_values() {
        let mut c = PruneConfig::new(0.0);
        assert!(c.validate().is_err());
        c = PruneConfig::new(0.5);
        c.min_ratio = 0.6;
        assert!(c.validate().is_err());
        c = PruneConfig::new(0.5);
        c.tau = -1.0;
        assert!(c.validate().is_err());
        c = PruneConfig::new(0.5);
        c.lambda = 1.5;
        assert!(c.validate().is_err());
        c = PruneConfig::new(0.5);
        c.knn = 0;
        assert!(c.validate().is_err());
        c = PruneConfig::new(1.0);
        c.min_ratio = 1.0;
        assert!(c.validate().is_ok());
    }
}
