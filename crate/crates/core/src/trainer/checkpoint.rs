use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{MimeError, Result};
use crate::mask::{ThresholdDocument, ThresholdSet};
use crate::network::{NetworkSpec, Weights};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// A network, its weights and optionally one task's thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub spec: NetworkSpec,
    pub weights: Weights,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<ThresholdDocument>,
    pub seed: u64,
    pub config: TrainConfig,
}

impl Checkpoint {
    pub fn new(
        spec: NetworkSpec,
        weights: Weights,
        thresholds: Option<&ThresholdSet>,
        config: TrainConfig,
    ) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            seed: config.seed,
            spec,
            weights,
            thresholds: thresholds.map(ThresholdSet::to_document),
            config,
        }
    }

    pub fn threshold_set(&self) -> Result<Option<ThresholdSet>> {
        self.thresholds
            .clone()
            .map(|d| {
                let t = ThresholdSet::from_document(d)?;
                t.validate_for(&self.spec)?;
                Ok(t)
            })
            .transpose()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(MimeError::Parse(format!(
                "unsupported checkpoint format_version {}",
                self.format_version
            )));
        }
        self.spec.validate()?;
        self.weights.check_against(&self.spec)?;
        self.config.validate()?;
        self.threshold_set()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| MimeError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_network, LayerShape};

    #[test]
    fn round_trip_is_lossless() {
        let spec = NetworkSpec::new(
            vec![LayerShape::conv("c", 1, 4, 4, 2, 3, 1, 1).with_bias(true), LayerShape::fc("o", 32, 3)],
            3,
        )
        .unwrap();
        let w = init_network(&spec, 11).unwrap();
        let mut t = ThresholdSet::constant(&spec, "task", 0.1).unwrap();
        t.layers[0].data_mut()[5] = 0.123_456_789_012_345_68;
        let c = Checkpoint::new(spec, w, Some(&t), TrainConfig { seed: 11, ..Default::default() });
        let text = c.to_json();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.threshold_set().unwrap().unwrap(), t);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn rejects_inconsistent_documents() {
        let spec = NetworkSpec::new(vec![LayerShape::fc("o", 2, 2)], 2).unwrap();
        let w = init_network(&spec, 1).unwrap();
        let c = Checkpoint::new(spec, w, None, TrainConfig::default());
        let mut v: serde_json::Value = serde_json::from_str(&c.to_json()).unwrap();
        v["weights"]["layers"][0]["weight"]["shape"] = serde_json::json!([2, 3]);
        assert!(Checkpoint::from_json(&v.to_string()).is_err());
        assert!(Checkpoint::from_json("[]").is_err());
    }
}
