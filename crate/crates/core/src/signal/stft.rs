use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
// Needed for float math when std is absent from the graph.
#[allow(unused_imports)]
use num_traits::Float;

use super::{AudioClip, ComplexSpectrogram, StftConfig};
use crate::fft::Fft;
use crate::{Error, Result};

/// Periodic Hamming window.
pub fn hamming(len: usize) -> Vec<f64> {
    (0..len).map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / len as f64).cos()).collect()
}

/// `1 + floor((n - win) / hop)` for `n >= win`, zero otherwise.
pub fn frame_count(n: usize, cfg: &StftConfig) -> usize {
    if n < cfg.win_length {
        0
    } else {
        1 + (n - cfg.win_length) / cfg.hop_length
    }
}

pub fn stft(clip: &AudioClip, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    let n = clip.samples.len();
    if n < cfg.win_length {
        return Err(Error::InputTooShort { needed: cfg.win_length, got: n });
    }
    let frames = frame_count(n, cfg);
    let window = hamming(cfg.win_length);
    let fft = Fft::new(cfg.fft_size)?;
    let mut out = ComplexSpectrogram::zeros(frames, *cfg);
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    for t in 0..frames {
        let start = t * cfg.hop_length;
        buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (i, w) in window.iter().enumerate() {
            buf[i] = Complex64::new(clip.samples[start + i] * w, 0.0);
        }
        fft.forward(&mut buf);
        out.frame_mut(t).copy_from_slice(&buf[..cfg.kept_bins]);
    }
    Ok(out)
}

/// Weighted overlap-add inverse with squared-window normalisation.
///
/// Bins above `kept_bins` are treated as zero; negative frequencies are the
/// conjugate mirror of the stored ones.
pub fn istft(spec: &ComplexSpectrogram) -> Result<AudioClip> {
    spec.check()?;
    if spec.frames == 0 {
        return Err(Error::EmptyInput);
    }
    let cfg = spec.config;
    let len = (spec.frames - 1) * cfg.hop_length + cfg.win_length;
    let window = hamming(cfg.win_length);
    let fft = Fft::new(cfg.fft_size)?;
    let half = cfg.fft_size / 2;
    let mut acc = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    for t in 0..spec.frames {
        buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (f, &v) in spec.frame(t).iter().enumerate() {
            buf[f] = v;
            if f > 0 && f < half {
                buf[cfg.fft_size - f] = v.conj();
            }
        }
        fft.inverse(&mut buf);
        let start = t * cfg.hop_length;
        for (i, w) in window.iter().enumerate() {
            acc[start + i] += buf[i].re * w;
            norm[start + i] += w * w;
        }
    }
    let samples = acc
        .into_iter()
        .zip(norm)
        .map(|(a, d)| if d < 1e-8 { 0.0 } else { a / d })
        .collect();
    // Spectrograms carry no rate; everything downstream runs at the pipeline rate.
    Ok(AudioClip { samples, sample_rate: crate::PIPELINE_RATE })
}
