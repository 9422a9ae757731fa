//! The conditioned UNet dereverberator, its visual tower, losses, training
//! loop and full-utterance inference.

mod infer;
mod layers;
mod loss;
mod model;
mod train;
mod unet;
mod van;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use infer::{dereverberate_full, predict_spectrogram};
pub use loss::{
    batch_objective, loss_magnitude, loss_magnitude_grad, loss_matching, loss_phase, loss_phase_grad, loss_total, BatchLoss,
    ExampleGrads, LossWeights, MatchingLoss,
};
pub use model::{panorama_tensor, segment_tensor, tensor_segment, ForwardPass, InputGrads, ModelCheck, VidaModel};
pub use train::{
    learning_rate, retrieval_accuracy, ExampleSource, Mapper, MemorySource, PreparedExample, Serial, StepRecord, TrainConfig,
    Trainer,
};

/// Visual tower settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VanConfig {
    /// Widths of the first three stride-2 stages; the fourth has `embed_dim`.
    pub widths: Vec<usize>,
    pub embed_dim: usize,
    /// One tower over all three channels instead of separate towers.
    pub early_fusion: bool,
    pub height: usize,
    pub width: usize,
}

impl Default for VanConfig {
    fn default() -> Self {
        Self { widths: alloc::vec![16, 32, 64], embed_dim: 64, early_fusion: false, height: 64, width: 252 }
    }
}

/// Spectrogram UNet settings; inputs are `2 x window x bins`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UNetConfig {
    pub window: usize,
    pub bins: usize,
    pub depth: usize,
    pub base_channels: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self { window: 64, bins: 64, depth: 5, base_channels: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub unet: UNetConfig,
    pub van: VanConfig,
    /// No visual tower; the conditioning vector is all zeros.
    pub audio_only: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { unet: UNetConfig::default(), van: VanConfig::default(), audio_only: false, seed: 0 }
    }
}

impl ModelConfig {
    /// 64x64 segments, 64-dimensional embeddings.
    pub fn desk() -> Self {
        Self::default()
    }

    /// The small variant used for fast experiments and gradient checks.
    pub fn toy() -> Self {
        Self {
            unet: UNetConfig { window: 64, bins: 64, depth: 5, base_channels: 8 },
            van: VanConfig { widths: alloc::vec![4, 8, 16], embed_dim: 16, early_fusion: false, height: 16, width: 64 },
            audio_only: false,
            seed: 0,
        }
    }

    /// 256x256 segments and 512-dimensional embeddings.
    pub fn full() -> Self {
        Self {
            unet: UNetConfig { window: 256, bins: 256, depth: 5, base_channels: 32 },
            van: VanConfig { widths: alloc::vec![16, 32, 64], embed_dim: 512, early_fusion: false, height: 128, width: 504 },
            audio_only: false,
            seed: 0,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.van.embed_dim
    }

    pub fn validate(&self) -> Result<()> {
        let u = &self.unet;
        if u.depth == 0 || u.base_channels == 0 {
            return Err(Error::InvalidConfig("model: depth and base_channels must be positive".into()));
        }
        let unit = 1usize << u.depth;
        if u.window == 0 || u.bins == 0 || u.window % unit != 0 || u.bins % unit != 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "model: window {} and bins {} must be positive multiples of 2^depth = {unit}",
                u.window,
                u.bins
            )));
        }
        if u.window % 2 != 0 {
            return Err(Error::InvalidConfig("model: window must be even".into()));
        }
        let v = &self.van;
        if v.embed_dim == 0 {
            return Err(Error::InvalidConfig("model: embed_dim must be positive".into()));
        }
        if v.widths.len() != 3 || v.widths.contains(&0) {
            return Err(Error::InvalidConfig("model: van widths must be three positive numbers".into()));
        }
        if v.height == 0 || v.width == 0 {
            return Err(Error::InvalidConfig("model: empty panorama resolution".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for cfg in [ModelConfig::desk(), ModelConfig::toy(), ModelConfig::full()] {
            cfg.validate().unwrap();
        }
        assert_eq!(ModelConfig::full().embed_dim(), 512);
    }

    #[test]
    fn indivisible_window_is_rejected() {
        let mut cfg = ModelConfig::desk();
        cfg.unet.window = 48;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }
}
