#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ImpulseResponse;
use crate::fft;
use crate::signal::AudioClip;
use crate::{Error, Result};

/// Full linear convolution, `len(clean) + len(rir) - 1` samples.
pub fn convolve_rir(clean: &AudioClip, rir: &ImpulseResponse) -> Result<AudioClip> {
    if clean.sample_rate != rir.sample_rate {
        return Err(Error::RateMismatch { left: clean.sample_rate, right: rir.sample_rate });
    }
    if clean.is_empty() || rir.samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(AudioClip { samples: fft::convolve(&clean.samples, &rir.samples), sample_rate: clean.sample_rate })
}

/// `signal + g * noise` with `g` set so the mixture SNR is exactly `snr_db`.
///
/// The noise is cropped to the signal length at an offset drawn from `seed`.
/// An infinite `snr_db` returns the signal unchanged.
pub fn mix_at_snr(signal: &AudioClip, noise: &AudioClip, snr_db: f64, seed: u64) -> Result<AudioClip> {
    if snr_db == f64::INFINITY {
        return Ok(signal.clone());
    }
    if signal.sample_rate != noise.sample_rate {
        return Err(Error::RateMismatch { left: signal.sample_rate, right: noise.sample_rate });
    }
    if noise.len() < signal.len() {
        return Err(Error::NoiseTooShort { noise: noise.len(), signal: signal.len() });
    }
    let p_signal = signal.power();
    if !(p_signal > 0.0) {
        return Err(Error::SilentSignal);
    }
    let offset = ChaCha8Rng::seed_from_u64(seed).gen_range(0..=noise.len() - signal.len());
    let crop = &noise.samples[offset..offset + signal.len()];
    let p_noise = crop.iter().map(|v| v * v).sum::<f64>() / crop.len() as f64;
    if !(p_noise > 0.0) {
        return Err(Error::SilentNoise);
    }
    let gain = (p_signal / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = signal.samples.iter().zip(crop).map(|(s, n)| s + gain * n).collect();
    Ok(AudioClip { samples, sample_rate: signal.sample_rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn random_clip(n: usize, seed: u64) -> AudioClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioClip::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16_000).unwrap()
    }

    #[test]
    fn identity_and_shift_kernels() {
        let x = random_clip(50, 1);
        let mut k = alloc::vec![0.0; 8];
        k[0] = 1.0;
        let y = convolve_rir(&x, &ImpulseResponse { samples: k.clone(), sample_rate: 16_000 }).unwrap();
        for (a, b) in x.samples.iter().zip(&y.samples) {
            assert!((a - b).abs() < 1e-12);
        }
        k[0] = 0.0;
        k[5] = 1.0;
        let y = convolve_rir(&x, &ImpulseResponse { samples: k, sample_rate: 16_000 }).unwrap();
        assert_eq!(y.len(), 57);
        for i in 0..50 {
            assert!((y.samples[i + 5] - x.samples[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_convolution() {
        let x = random_clip(64, 2);
        let h = random_clip(16, 3);
        let y = convolve_rir(&x, &ImpulseResponse { samples: h.samples.clone(), sample_rate: 16_000 }).unwrap();
        let direct: Vec<f64> = (0..79)
            .map(|n| (0..16).filter(|&k| n >= k && n - k < 64).map(|k| h.samples[k] * x.samples[n - k]).sum())
            .collect();
        for (a, b) in y.samples.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rate_mismatch() {
        let x = random_clip(10, 1);
        let h = ImpulseResponse { samples: alloc::vec![1.0], sample_rate: 8000 };
        assert_eq!(convolve_rir(&x, &h), Err(Error::RateMismatch { left: 16_000, right: 8000 }));
    }

    #[test]
    fn requested_snr_is_exact() {
        let s = random_clip(1000, 4);
        let n = random_clip(3000, 5);
        for snr in [-5.0, 0.0, 20.0, 42.5] {
            let mixed = mix_at_snr(&s, &n, snr, 17).unwrap();
            let residual: Vec<f64> = mixed.samples.iter().zip(&s.samples).map(|(m, x)| m - x).collect();
            let pn = residual.iter().map(|v| v * v).sum::<f64>() / residual.len() as f64;
            let measured = 10.0 * (s.power() / pn).log10();
            assert!((measured - snr).abs() < 1e-9, "{measured} vs {snr}");
            if snr == 0.0 {
                assert!((pn - s.power()).abs() / s.power() < 1e-9);
            }
        }
        assert_eq!(mix_at_snr(&s, &n, f64::INFINITY, 1).unwrap(), s);
    }

    #[test]
    fn zero_power_errors() {
        let s = random_clip(100, 4);
        let silent = AudioClip::zeros(200, 16_000);
        assert_eq!(mix_at_snr(&s, &silent, 10.0, 0), Err(Error::SilentNoise));
        assert_eq!(mix_at_snr(&AudioClip::zeros(100, 16_000), &random_clip(200, 1), 10.0, 0), Err(Error::SilentSignal));
    }
}
