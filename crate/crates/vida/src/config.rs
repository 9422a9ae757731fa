//! Pipeline configuration file (TOML) and its content digest.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vida_core::forge::SceneSamplerConfig;
use vida_core::metrics::Ablation;
use vida_core::net::{ModelConfig, TrainConfig};
use vida_core::signal::{StftConfig, DEFAULT_GL_ITERS};
use vida_core::view::ViewConfig;
use vida_core::wpe::WpeConfig;

use crate::error::{Result, VidaError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub gl_iters: usize,
    /// Viewing direction of the restricted-FoV ablation, degrees of azimuth.
    pub fov_center_azimuth: f64,
    pub ablation: Ablation,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { gl_iters: DEFAULT_GL_ITERS, fov_center_azimuth: 0.0, ablation: Ablation::FullPano }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub stft: StftConfig,
    pub sampler: SceneSamplerConfig,
    pub view: ViewConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub wpe: WpeConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::DESK,
            sampler: SceneSamplerConfig::default(),
            view: ViewConfig::default(),
            model: ModelConfig::desk(),
            train: TrainConfig::default(),
            wpe: WpeConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Keys read by each subcommand, for `--help`.
pub const KEYS_BUILD: &str = "config keys: [stft] fft_size win_length hop_length kept_bins; [sampler] families (dims_min dims_max absorption_min absorption_max) distance_min distance_max train_samples val_samples test_samples rng_seed max_order noise_corpus snr_db clip_seconds; [view] width height fov_degrees speaker_radius";
pub const KEYS_TRAIN: &str = "config keys: [stft] fft_size win_length hop_length kept_bins; [model] seed audio_only unet.window unet.bins unet.depth unet.base_channels van.widths van.embed_dim van.early_fusion van.height van.width; [train] epochs batch_size lr_start lr_end lambda_phase lambda_match margin augment_rotation seed";
pub const KEYS_DEREVERB: &str = "config keys: [stft] fft_size win_length hop_length kept_bins; [wpe] taps delay iterations eps delta stft; [eval] gl_iters";
pub const KEYS_EVALUATE: &str = "config keys: [stft] fft_size win_length hop_length kept_bins; [view] fov_degrees; [wpe] taps delay iterations eps delta stft; [eval] gl_iters fov_center_azimuth ablation";
pub const KEYS_GRADCHECK: &str = "config keys: [model] seed audio_only unet.* van.*; [train] lambda_phase lambda_match margin";
pub const KEYS_RIR: &str = "config keys: [sampler] max_order";

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| VidaError::Config(e.message().replace('\n', " ")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| VidaError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            VidaError::Config(m) => VidaError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Default config when no path is given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.sampler.validate()?;
        self.view.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.wpe.validate()?;
        if self.model.unet.bins != self.stft.kept_bins {
            return Err(VidaError::Config(format!("model expects {} bins but stft keeps {}", self.model.unet.bins, self.stft.kept_bins)));
        }
        if !self.model.audio_only && (self.model.van.height, self.model.van.width) != (self.view.height, self.view.width) {
            return Err(VidaError::Config(format!(
                "model panorama is {}x{} but view renders {}x{}",
                self.model.van.height, self.model.van.width, self.view.height, self.view.width
            )));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (keys sorted), hex encoded.
    pub fn digest(&self) -> String {
        digest_of(self)
    }
}

pub fn digest_of<T: Serialize>(value: &T) -> String {
    // serde_json's default map is ordered, so this is canonical.
    let canonical = serde_json::to_value(value).and_then(|v| serde_json::to_string(&v)).expect("config serializes");
    hex(&Sha256::digest(canonical.as_bytes()))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_consistent() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(PipelineConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = PipelineConfig::from_toml("[train]\nepochz = 3\n").unwrap_err();
        assert!(err.to_string().contains("epochz"), "{err}");
        assert!(PipelineConfig::from_toml("[nonsense]\n").is_err());
    }

    #[test]
    fn digest_ignores_key_order_but_not_values() {
        let a = PipelineConfig::from_toml("[train]\nepochs = 3\nbatch_size = 4\n[wpe]\ntaps = 5\n").unwrap();
        let b = PipelineConfig::from_toml("[wpe]\ntaps = 5\n[train]\nbatch_size = 4\nepochs = 3\n").unwrap();
        let c = PipelineConfig::from_toml("[train]\nepochs = 4\nbatch_size = 4\n[wpe]\ntaps = 5\n").unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn shape_drift_is_a_config_error() {
        let err = PipelineConfig::from_toml("[stft]\nfft_size = 512\nwin_length = 400\nhop_length = 160\nkept_bins = 256\n").unwrap_err();
        assert!(matches!(err, VidaError::Config(_)));
    }
}
