//! Time-frequency analysis and synthesis.
//!
//! Framing is uncentred: frame `t` covers samples `[t * hop, t * hop + win)`,
//! windowed by a periodic Hamming window and zero-padded to `fft_size`. Only the
//! lowest `kept_bins` non-negative frequencies are stored.

mod codec;
mod griffin_lim;
mod stft;

use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use codec::{LogMagPhase, MAG_FLOOR};
pub use griffin_lim::{griffin_lim, griffin_lim_traced, PhaseInit, DEFAULT_GL_ITERS};
pub use stft::{frame_count, hamming, istft, stft};

/// Mono waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!("sample {i} is not finite")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self { samples: alloc::vec![0.0; len], sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Mean square over all samples.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self { samples: self.samples.iter().map(|v| v * gain).collect(), sample_rate: self.sample_rate }
    }

    /// Zero-pad or truncate to exactly `len` samples.
    pub fn fit_to(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Self { samples, sample_rate: self.sample_rate }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftConfig {
    pub fft_size: usize,
    pub win_length: usize,
    pub hop_length: usize,
    pub kept_bins: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::STANDARD
    }
}

impl StftConfig {
    /// 512-point FFT, 25 ms Hamming window, 10 ms hop, Nyquist bin dropped.
    pub const STANDARD: StftConfig = StftConfig { fft_size: 512, win_length: 400, hop_length: 160, kept_bins: 256 };

    /// Scaled-down analysis giving 64 bins, used for laptop-sized models.
    pub const DESK: StftConfig = StftConfig { fft_size: 128, win_length: 100, hop_length: 40, kept_bins: 64 };

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(alloc::format!("stft: {m}")));
        if !self.fft_size.is_power_of_two() {
            return bad("fft_size must be a power of two");
        }
        if self.win_length == 0 || self.win_length > self.fft_size {
            return bad("win_length must be in 1..=fft_size");
        }
        if self.hop_length == 0 || self.hop_length > self.win_length {
            return bad("hop_length must be in 1..=win_length");
        }
        if self.kept_bins == 0 || self.kept_bins > self.fft_size / 2 + 1 {
            return bad("kept_bins must be in 1..=fft_size/2+1");
        }
        Ok(())
    }

    /// Same framing with every non-negative frequency kept.
    pub fn full_band(self) -> Self {
        Self { kept_bins: self.fft_size / 2 + 1, ..self }
    }
}

/// Complex STFT, `frames x bins`, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<Complex64>,
    pub config: StftConfig,
}

impl ComplexSpectrogram {
    pub fn zeros(frames: usize, config: StftConfig) -> Self {
        Self {
            frames,
            bins: config.kept_bins,
            data: alloc::vec![Complex64::new(0.0, 0.0); frames * config.kept_bins],
            config,
        }
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex64] {
        &mut self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn get(&self, t: usize, f: usize) -> Complex64 {
        self.data[t * self.bins + f]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm()).collect()
    }

    pub fn check(&self) -> Result<()> {
        self.config.validate()?;
        if self.bins != self.config.kept_bins || self.data.len() != self.frames * self.bins {
            return Err(Error::shape(
                "spectrogram",
                alloc::format!("{}x{} with {} entries, config keeps {} bins", self.frames, self.bins, self.data.len(), self.config.kept_bins),
            ));
        }
        Ok(())
    }
}
