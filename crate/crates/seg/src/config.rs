//! Segmenter selection and training hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SegError};
use crate::loss::LossWeights;
use crate::optim::Schedule;
use crate::unet::ModelConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    BruteForce,
    Vesselness,
    #[default]
    AttentionUnet,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "brute_force" | "brute-force" => Ok(Variant::BruteForce),
            "vesselness" => Ok(Variant::Vesselness),
            "attention_unet" | "attention-unet" | "unet" => Ok(Variant::AttentionUnet),
            other => Err(format!(
                "unknown segmenter `{other}` (expected brute_force, vesselness or attention_unet)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossWeights,
    pub schedule: Schedule,
    /// Fraction of samples assigned to training.
    pub split_ratio: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            batch_size: 10,
            epochs: 20,
            loss: LossWeights::default(),
            schedule: Schedule::default(),
            split_ratio: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(SegError::config(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(SegError::config(format!("split ratio must be in (0, 1), got {}", self.split_ratio)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(SegError::config("batch size and epochs must be positive"));
        }
        if !(self.loss.ce >= 0.0 && self.loss.dice >= 0.0 && self.loss.ce + self.loss.dice > 0.0) {
            return Err(SegError::config("loss weights must be non-negative and not both zero"));
        }
        if let Schedule::WarmRestarts { period_epochs, min_lr } = self.schedule {
            if period_epochs == 0 || !(0.0..=self.learning_rate).contains(&min_lr) {
                return Err(SegError::config("warm restarts need a positive period and 0 <= min_lr <= lr"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    pub variant: Variant,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_rejections() {
        let c = SegmenterConfig::default();
        c.validate().unwrap();
        assert_eq!(c.train.learning_rate, 5e-5);
        assert_eq!((c.train.batch_size, c.train.epochs), (10, 20));
        assert_eq!((c.model.input_width, c.model.input_height), (112, 256));
        for bad in [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { split_ratio: 1.0, ..Default::default() },
            TrainConfig { split_ratio: 0.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<SegmenterConfig>(&json).unwrap(), c);
        let partial: SegmenterConfig = serde_json::from_str(r#"{"train": {"epochs": 3}}"#).unwrap();
        assert_eq!(partial.train.epochs, 3);
        assert_eq!("vesselness".parse::<Variant>().unwrap(), Variant::Vesselness);
    }
}
