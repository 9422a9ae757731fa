//! Single-channel weighted prediction error dereverberation.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::signal::{istft, stft, AudioClip, ComplexSpectrogram, StftConfig};
use crate::{Error, Result};

/// Analysis used by `wpe_clip`: full band, 16 ms frames, 4 ms hop.
pub const WPE_STFT: StftConfig = StftConfig { fft_size: 256, win_length: 256, hop_length: 64, kept_bins: 129 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WpeConfig {
    pub taps: usize,
    /// Prediction delay in frames.
    pub delay: usize,
    pub iterations: usize,
    /// Floor on the per-frame variance estimate, relative to the mean power of
    /// the bin.
    pub eps: f64,
    /// Diagonal loading, relative to the mean diagonal of the normal matrix.
    pub delta: f64,
    /// Transform used when filtering waveforms.
    pub stft: StftConfig,
}

impl Default for WpeConfig {
    fn default() -> Self {
        Self { taps: 10, delay: 3, iterations: 3, eps: 1e-12, delta: 1e-6, stft: WPE_STFT }
    }
}

impl WpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 || self.delay == 0 || !(self.eps > 0.0) || !(self.delta > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!("wpe: {self:?}")));
        }
        self.stft.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WpeOutput {
    pub spec: ComplexSpectrogram,
    /// `sum_t |s_t|^2 / lambda_t + ln lambda_t` over all bins, before the
    /// first iteration and after each one.
    pub objective: Vec<f64>,
}

/// Dereverberate a waveform through `cfg.stft`; the output has the input length.
pub fn wpe_clip(clip: &AudioClip, cfg: &WpeConfig) -> Result<AudioClip> {
    let spec = stft(clip, &cfg.stft)?;
    Ok(istft(&wpe(&spec, cfg)?)?.fit_to(clip.len()))
}

pub fn wpe(spec: &ComplexSpectrogram, cfg: &WpeConfig) -> Result<ComplexSpectrogram> {
    Ok(wpe_traced(spec, cfg)?.spec)
}

/// Each bin is processed independently. An iteration re-estimates the
/// variances from the current estimate, solves the weighted normal equations
/// for the prediction filter, and subtracts the delayed prediction from the
/// input.
///
/// The loading term pulls the filter towards the previous iterate rather than
/// towards zero, so the objective cannot increase between iterations; on the
/// first iteration this is ordinary Tikhonov loading.
pub fn wpe_traced(spec: &ComplexSpectrogram, cfg: &WpeConfig) -> Result<WpeOutput> {
    cfg.validate()?;
    spec.check()?;
    if spec.frames <= cfg.taps + cfg.delay {
        return Err(Error::UtteranceTooShort { frames: spec.frames, taps: cfg.taps, delay: cfg.delay });
    }
    let (t_len, bins) = (spec.frames, spec.bins);
    let mut out = spec.clone();
    let mut objective = vec![0.0; cfg.iterations + 1];
    let mut x = vec![Complex64::new(0.0, 0.0); t_len];
    for f in 0..bins {
        for (t, v) in x.iter_mut().enumerate() {
            *v = spec.get(t, f);
        }
        let trace = process_bin(&x, cfg);
        for (t, v) in trace.estimate.iter().enumerate() {
            out.data[t * bins + f] = *v;
        }
        objective.iter_mut().zip(&trace.objective).for_each(|(o, v)| *o += v);
    }
    Ok(WpeOutput { spec: out, objective })
}

struct BinTrace {
    estimate: Vec<Complex64>,
    objective: Vec<f64>,
}

fn bin_objective(s: &[Complex64], eps: f64) -> f64 {
    s.iter()
        .map(|v| {
            let p = v.norm_sqr();
            let lambda = p.max(eps);
            p / lambda + lambda.ln()
        })
        .sum()
}

fn process_bin(x: &[Complex64], cfg: &WpeConfig) -> BinTrace {
    let (k, d) = (cfg.taps, cfg.delay);
    let zero = Complex64::new(0.0, 0.0);
    // Stacked delayed observation for frame t, tap j: x[t - d - j] or zero.
    let delayed = |t: usize, j: usize| if t >= d + j { x[t - d - j] } else { zero };

    let mean_power = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64;
    let eps = (cfg.eps * mean_power).max(f64::MIN_POSITIVE);
    let mut s = x.to_vec();
    let mut g = vec![zero; k];
    let mut objective = vec![bin_objective(&s, eps)];
    for _ in 0..cfg.iterations {
        let mut r = vec![zero; k * k];
        let mut p = vec![zero; k];
        for t in d..x.len() {
            let w = 1.0 / s[t].norm_sqr().max(eps);
            for i in 0..k {
                let yi = delayed(t, i);
                if yi == zero {
                    continue;
                }
                p[i] += yi * x[t].conj() * w;
                for j in 0..=i {
                    r[i * k + j] += yi * delayed(t, j).conj() * w;
                }
            }
        }
        let mean_diag = (0..k).map(|i| r[i * k + i].re).sum::<f64>() / k as f64;
        if mean_diag > 0.0 {
            let load = cfg.delta * mean_diag;
            for i in 0..k {
                r[i * k + i] += load;
                p[i] += g[i] * load;
                for j in 0..i {
                    r[j * k + i] = r[i * k + j].conj();
                }
            }
            if let Some(sol) = cholesky_solve(&mut r, &p, k) {
                g = sol;
            }
        }
        for t in 0..x.len() {
            let pred: Complex64 = (0..k).map(|j| g[j].conj() * delayed(t, j)).sum();
            s[t] = x[t] - pred;
        }
        objective.push(bin_objective(&s, eps));
    }
    BinTrace { estimate: s, objective }
}

/// Solve `A z = b` for Hermitian positive definite `A` (row-major, lower
/// triangle used and overwritten). `None` if a pivot is not positive.
fn cholesky_solve(a: &mut [Complex64], b: &[Complex64], n: usize) -> Option<Vec<Complex64>> {
    for j in 0..n {
        let mut diag = a[j * n + j].re;
        for m in 0..j {
            diag -= a[j * n + m].norm_sqr();
        }
        if !(diag > 0.0) {
            return None;
        }
        let l_jj = diag.sqrt();
        a[j * n + j] = Complex64::new(l_jj, 0.0);
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for m in 0..j {
                v -= a[i * n + m] * a[j * n + m].conj();
            }
            a[i * n + j] = v / l_jj;
        }
    }
    // L y = b, then L^H z = y.
    let mut y = b.to_vec();
    for i in 0..n {
        for m in 0..i {
            let l = a[i * n + m];
            let ym = y[m];
            y[i] -= l * ym;
        }
        y[i] /= a[i * n + i].re;
    }
    for i in (0..n).rev() {
        for m in i + 1..n {
            let l = a[m * n + i].conj();
            let ym = y[m];
            y[i] -= l * ym;
        }
        y[i] /= a[i * n + i].re;
    }
    Some(y)
}
