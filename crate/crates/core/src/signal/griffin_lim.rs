use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
// Needed for float math when std is absent from the graph.
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{istft, stft, AudioClip, ComplexSpectrogram, StftConfig};
use crate::{Error, Result};

pub const DEFAULT_GL_ITERS: usize = 30;

#[derive(Debug, Clone, Copy)]
pub enum PhaseInit<'a> {
    /// Start from a supplied phase plane, e.g. the network prediction.
    Given(&'a [f64]),
    /// Uniform phase in `(-pi, pi]` from a seeded generator.
    Random(u64),
}

/// Recover a waveform whose STFT magnitude approximates `mag` (`frames x
/// kept_bins`, linear amplitude).
pub fn griffin_lim(
    mag: &[f64],
    frames: usize,
    cfg: &StftConfig,
    init: PhaseInit<'_>,
    iters: usize,
) -> Result<AudioClip> {
    griffin_lim_traced(mag, frames, cfg, init, iters).map(|(clip, _)| clip)
}

/// As [`griffin_lim`], also returning `|| |stft(x_k)| - mag ||` for every
/// iterate `k = 0..=iters`.
pub fn griffin_lim_traced(
    mag: &[f64],
    frames: usize,
    cfg: &StftConfig,
    init: PhaseInit<'_>,
    iters: usize,
) -> Result<(AudioClip, Vec<f64>)> {
    cfg.validate()?;
    if frames == 0 {
        return Err(Error::EmptyInput);
    }
    if mag.len() != frames * cfg.kept_bins {
        return Err(Error::shape("griffin_lim", alloc::format!("{} magnitudes for {frames}x{}", mag.len(), cfg.kept_bins)));
    }
    if let Some(index) = mag.iter().position(|&m| !(m >= 0.0) || !m.is_finite()) {
        return Err(Error::InvalidMagnitude { index, value: mag[index] });
    }
    let phase: Vec<f64> = match init {
        PhaseInit::Given(p) => {
            if p.len() != mag.len() {
                return Err(Error::shape("griffin_lim", alloc::format!("phase plane of {} for {} magnitudes", p.len(), mag.len())));
            }
            p.to_vec()
        }
        PhaseInit::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..mag.len()).map(|_| PI - rng.gen::<f64>() * 2.0 * PI).collect()
        }
    };
    let mut spec = ComplexSpectrogram {
        frames,
        bins: cfg.kept_bins,
        data: mag.iter().zip(&phase).map(|(&m, &p)| Complex64::from_polar(m, p)).collect(),
        config: *cfg,
    };
    let mut clip = istft(&spec)?;
    let mut residuals = Vec::with_capacity(iters + 1);
    for k in 0..=iters {
        let rebuilt = stft(&clip, cfg)?;
        residuals.push(residual(&rebuilt, mag));
        if k == iters {
            break;
        }
        for (out, (&m, c)) in spec.data.iter_mut().zip(mag.iter().zip(&rebuilt.data)) {
            let n = c.norm();
            *out = if n > 0.0 { c * (m / n) } else { Complex64::new(m, 0.0) };
        }
        clip = istft(&spec)?;
    }
    Ok((clip, residuals))
}

fn residual(spec: &ComplexSpectrogram, mag: &[f64]) -> f64 {
    spec.data.iter().zip(mag).map(|(c, m)| (c.norm() - m).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn speechlike(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f0 = rng.gen_range(100.0..200.0);
        (0..len)
            .map(|n| {
                let t = n as f64 / 16_000.0;
                let env = (PI * t * 3.0).sin().abs();
                (1..12).map(|h| (2.0 * PI * f0 * h as f64 * t).sin() / h as f64).sum::<f64>() * env * 0.3
                    + rng.gen_range(-0.01..0.01)
            })
            .collect()
    }

    #[test]
    fn consistent_spectrogram_is_a_fixed_point() {
        let cfg = StftConfig::STANDARD.full_band();
        let x = speechlike(4000, 1);
        let spec = stft(&AudioClip::new(x.clone(), 16_000).unwrap(), &cfg).unwrap();
        let mag = spec.magnitudes();
        let phase: Vec<f64> = spec.data.iter().map(|c| c.arg()).collect();
        for iters in [0, 3] {
            let y = griffin_lim(&mag, spec.frames, &cfg, PhaseInit::Given(&phase), iters).unwrap();
            let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 400..y.len() - 400 {
                assert!((y.samples[i] - x[i]).abs() / peak < 1e-5);
            }
        }
    }

    #[test]
    fn residual_never_increases() {
        let cfg = StftConfig::STANDARD;
        let x = speechlike(8000, 2);
        let spec = stft(&AudioClip::new(x, 16_000).unwrap(), &cfg).unwrap();
        let (_, trace) =
            griffin_lim_traced(&spec.magnitudes(), spec.frames, &cfg, PhaseInit::Random(9), 30).unwrap();
        assert_eq!(trace.len(), 31);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
        assert!(trace[30] < trace[0]);
    }

    #[test]
    fn negative_magnitude_is_rejected() {
        let cfg = StftConfig::DESK;
        let mut mag = alloc::vec![1.0; 64 * 3];
        mag[5] = -0.5;
        let err = griffin_lim(&mag, 3, &cfg, PhaseInit::Random(0), 1).unwrap_err();
        assert!(matches!(err, Error::InvalidMagnitude { index: 5, .. }));
    }
}
