use serde::{Deserialize, Serialize};

use super::surrogate::SurrogateSpec;
use crate::error::{MimeError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    /// Weight of the `sum exp(t)` regularizer.
    #[serde(default = "defaults::beta")]
    pub beta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub surrogate: SurrogateSpec,
    #[serde(default = "defaults::threshold_init")]
    pub threshold_init: f64,
    /// Post-step clamp keeping every threshold strictly positive.
    #[serde(default = "defaults::threshold_floor")]
    pub threshold_floor: f64,
    /// Include the `y * g(y - t)` term in `da/dy`; off means `da/dy = m`.
    #[serde(default = "defaults::yes")]
    pub surrogate_input_term: bool,
    /// Train the task-specific classifier head jointly with the thresholds.
    #[serde(default = "defaults::yes")]
    pub train_head: bool,
}

mod defaults {
    pub fn epochs() -> usize {
        10
    }
    pub fn learning_rate() -> f64 {
        1e-3
    }
    pub fn batch_size() -> usize {
        100
    }
    pub fn beta() -> f64 {
        1e-6
    }
    pub fn threshold_init() -> f64 {
        1e-2
    }
    pub fn threshold_floor() -> f64 {
        1e-4
    }
    pub fn yes() -> bool {
        true
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: defaults::epochs(),
            learning_rate: defaults::learning_rate(),
            batch_size: defaults::batch_size(),
            beta: defaults::beta(),
            seed: 0,
            surrogate: SurrogateSpec::default(),
            threshold_init: defaults::threshold_init(),
            threshold_floor: defaults::threshold_floor(),
            surrogate_input_term: true,
            train_head: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(MimeError::InvalidArgument(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        positive("learning_rate", self.learning_rate)?;
        positive("threshold_init", self.threshold_init)?;
        positive("threshold_floor", self.threshold_floor)?;
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(MimeError::InvalidArgument(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.batch_size == 0 {
            return Err(MimeError::InvalidArgument("batch_size must be >= 1".into()));
        }
        self.surrogate.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_document() {
        let c: TrainConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, TrainConfig::default());
        assert_eq!((c.epochs, c.batch_size), (10, 100));
        assert_eq!((c.learning_rate, c.beta, c.threshold_init, c.threshold_floor), (1e-3, 1e-6, 1e-2, 1e-4));
        assert_eq!(c.surrogate.width, 1.0);
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { beta: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { threshold_floor: 0.0, ..Default::default() }.validate().is_err());
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 3}"#).is_err());
    }
}
