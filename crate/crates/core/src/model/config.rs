use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::dsp::SpectrogramConfig;

/// Network hyperparameters. Everything needed to rebuild the parameter
/// layout, apart from the class counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub spectrogram: SpectrogramConfig,
    pub sample_rate: u32,
    pub temporal_channels: usize,
    pub block_channels: [usize; 3],
    pub reversal_hidden: usize,
    pub bn_eps: f64,
    /// Weight of the newest batch in the running statistics.
    pub bn_momentum: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            spectrogram: SpectrogramConfig::default(),
            sample_rate: 16000,
            temporal_channels: 32,
            block_channels: [32, 64, 128],
            reversal_hidden: 128,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

impl ModelConfig {
    /// Narrow variant for single-core experiments.
    pub fn desk() -> Self {
        Self {
            temporal_channels: 8,
            block_channels: [8, 16, 32],
            reversal_hidden: 32,
            ..Self::default()
        }
    }

    pub fn embedding_channels(&self) -> usize {
        self.block_channels[2]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.spectrogram.validate(self.sample_rate)?;
        if self.temporal_channels == 0 || self.block_channels.contains(&0) || self.reversal_hidden == 0 {
            return Err(ModelError::InvalidConfig("channel counts must be positive".into()));
        }
        if !(self.bn_eps > 0.0) || !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return Err(ModelError::InvalidConfig(format!(
                "need bn_eps > 0 and bn_momentum in (0, 1], got {} and {}",
                self.bn_eps, self.bn_momentum
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), ModelError> {
        let w = [self.alpha, self.beta, self.gamma];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(ModelError::InvalidConfig(format!("loss weights must be finite and nonnegative, got {w:?}")));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(ModelError::InvalidConfig("loss weights are all zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weights: LossWeights,
    pub lambda_gain: f64,
    /// Focusing exponent of the focal losses.
    pub focal_gamma: f64,
    /// Inverse-frequency class weights on the attribute-group losses.
    pub class_weighting: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            batch_size: 64,
            lr: 0.001,
            weights: LossWeights::default(),
            lambda_gain: 10.0,
            focal_gamma: 2.0,
            class_weighting: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.weights.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("epochs and batch size must be >= 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(ModelError::InvalidConfig(format!("learning rate {}", self.lr)));
        }
        if !(self.lambda_gain > 0.0) || !(self.focal_gamma >= 0.0) {
            return Err(ModelError::InvalidConfig("lambda gain must be > 0 and focal gamma >= 0".into()));
        }
        Ok(())
    }
}
