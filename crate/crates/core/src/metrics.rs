//! Objective scores for dereverberated audio and their aggregation.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::signal::{stft, AudioClip, StftConfig};
use crate::{Error, Result};

/// Offset inside the logarithm of the log-spectral distance.
pub const LSD_EPS: f64 = 1e-5;
pub const SEGSNR_FRAME: usize = 256;
pub const SEGSNR_MIN_DB: f64 = -10.0;
pub const SEGSNR_MAX_DB: f64 = 35.0;
/// Reference frames below this energy are not scored by `segsnr`.
pub const VOICED_ENERGY: f64 = 1e-10;

fn aligned(reference: &AudioClip, estimate: &AudioClip) -> Result<AudioClip> {
    if reference.is_empty() {
        return Err(Error::EmptyInput);
    }
    if reference.sample_rate != estimate.sample_rate {
        return Err(Error::RateMismatch { left: reference.sample_rate, right: estimate.sample_rate });
    }
    Ok(estimate.fit_to(reference.len()))
}

/// Log-spectral distance in dB, averaged over frames.
pub fn lsd(reference: &AudioClip, estimate: &AudioClip, cfg: &StftConfig) -> Result<f64> {
    let est = aligned(reference, estimate)?;
    let a = stft(reference, cfg)?;
    let b = stft(&est, cfg)?;
    let db = |c: num_complex::Complex64| 20.0 * (c.norm() + LSD_EPS).log10();
    let mut total = 0.0;
    for t in 0..a.frames {
        let sq: f64 = a.frame(t).iter().zip(b.frame(t)).map(|(&x, &y)| (db(x) - db(y)).powi(2)).sum();
        total += (sq / a.bins as f64).sqrt();
    }
    Ok(total / a.frames as f64)
}

/// Segmental SNR over non-overlapping frames (the last may be short), each
/// clamped to `[-10, 35]` dB. Frames where the reference is silent are skipped.
pub fn segsnr(reference: &AudioClip, estimate: &AudioClip) -> Result<f64> {
    segsnr_with(reference, estimate, SEGSNR_FRAME, SEGSNR_MIN_DB, SEGSNR_MAX_DB)
}

pub fn segsnr_with(reference: &AudioClip, estimate: &AudioClip, frame: usize, lo: f64, hi: f64) -> Result<f64> {
    if frame == 0 || !(lo <= hi) {
        return Err(Error::InvalidConfig(alloc::format!("segsnr frame {frame}, clamp [{lo}, {hi}]")));
    }
    let est = aligned(reference, estimate)?;
    let (mut sum, mut voiced) = (0.0, 0usize);
    for (r, e) in reference.samples.chunks(frame).zip(est.samples.chunks(frame)) {
        let signal: f64 = r.iter().map(|v| v * v).sum();
        if signal < VOICED_ENERGY {
            continue;
        }
        let noise: f64 = r.iter().zip(e).map(|(a, b)| (a - b).powi(2)).sum();
        // A zero-error frame is infinitely good and lands on the upper clamp.
        let snr = if noise == 0.0 { hi } else { 10.0 * (signal / noise).log10() };
        sum += snr.clamp(lo, hi);
        voiced += 1;
    }
    if voiced == 0 {
        return Err(Error::NoVoicedFrames);
    }
    Ok(sum / voiced as f64)
}

/// Mean squared difference of STFT magnitudes.
pub fn stft_mse(reference: &AudioClip, estimate: &AudioClip, cfg: &StftConfig) -> Result<f64> {
    let est = aligned(reference, estimate)?;
    let a = stft(reference, cfg)?;
    let b = stft(&est, cfg)?;
    let sum: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x.norm() - y.norm()).powi(2)).sum();
    Ok(sum / a.data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    None,
    Wpe,
    AudioOnly,
    Vida,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::None, Method::Wpe, Method::AudioOnly, Method::Vida];

    pub fn name(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Wpe => "wpe",
            Method::AudioOnly => "audio_only",
            Method::Vida => "vida",
        }
    }
}

/// Visual input given to the model at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    FullPano,
    Fov80,
    NoSpeaker,
    /// Selects a checkpoint trained without the matching term; the panorama is untouched.
    NoMatching,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::FullPano, Ablation::Fov80, Ablation::NoSpeaker, Ablation::NoMatching];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::FullPano => "full_pano",
            Ablation::Fov80 => "fov80",
            Ablation::NoSpeaker => "no_speaker",
            Ablation::NoMatching => "no_matching",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub method: Method,
    pub lsd: f64,
    pub segsnr: f64,
    pub stft_mse: f64,
    pub rt60_in: Option<f64>,
    pub distance: f64,
}

impl SampleRecord {
    pub fn score(id: impl Into<String>, method: Method, clean: &AudioClip, estimate: &AudioClip, cfg: &StftConfig, rt60_in: Option<f64>, distance: f64) -> Result<Self> {
        Ok(Self {
            id: id.into(),
            method,
            lsd: lsd(clean, estimate, cfg)?,
            segsnr: segsnr(clean, estimate)?,
            stft_mse: stft_mse(clean, estimate, cfg)?,
            rt60_in,
            distance,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub median: f64,
    /// Relative improvement of the mean over the unprocessed input, as a fraction.
    pub improvement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_lsd: f64,
    pub mean_segsnr: f64,
    pub mean_stft_mse: f64,
}

/// Bucket edges in metres.
pub const DISTANCE_EDGES: [f64; 6] = [0.0, 1.0, 2.0, 3.0, 4.0, f64::INFINITY];
/// Bucket edges in seconds. Samples without an RT60 go in a separate bucket.
pub const RT60_EDGES: [f64; 6] = [0.0, 0.3, 0.6, 0.9, 1.2, f64::INFINITY];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: Method,
    pub ablation: Ablation,
    /// Sorted by id.
    pub records: Vec<SampleRecord>,
    pub lsd: Aggregate,
    pub segsnr: Aggregate,
    pub stft_mse: Aggregate,
    /// Empty buckets are left out.
    pub by_distance: Vec<Bucket>,
    pub by_rt60: Vec<Bucket>,
    /// Samples whose RT60 could not be measured; its edges span everything.
    pub rt60_unknown: Option<Bucket>,
}

impl MetricReport {
    /// Aggregate per-sample records. `baseline` holds the unprocessed records
    /// of the same samples; improvements are left empty without it.
    pub fn build(method: Method, ablation: Ablation, mut records: Vec<SampleRecord>, baseline: Option<&[SampleRecord]>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput);
        }
        records.sort_by(|a, b| a.id.cmp(&b.id));
        let mut base = baseline.map(|b| b.to_vec());
        if let Some(b) = base.as_mut() {
            b.sort_by(|x, y| x.id.cmp(&y.id));
            if b.len() != records.len() || b.iter().zip(&records).any(|(x, y)| x.id != y.id) {
                return Err(Error::InvalidConfig("baseline records do not cover the same samples".into()));
            }
        }
        let agg = |f: fn(&SampleRecord) -> f64, higher_is_better: bool| {
            let values: Vec<f64> = records.iter().map(f).collect();
            let m = mean(&values);
            let improvement = base.as_ref().map(|b| {
                let u = mean(&b.iter().map(f).collect::<Vec<_>>());
                relative_improvement(u, m, higher_is_better)
            });
            Aggregate { mean: m, median: median(&values), improvement }
        };
        let lsd = agg(|r| r.lsd, false);
        let segsnr = agg(|r| r.segsnr, true);
        let stft_mse = agg(|r| r.stft_mse, false);
        let by_distance = buckets(&records, &DISTANCE_EDGES, |r| Some(r.distance));
        let by_rt60 = buckets(&records, &RT60_EDGES, |r| r.rt60_in);
        let unknown: Vec<&SampleRecord> = records.iter().filter(|r| r.rt60_in.is_none()).collect();
        let rt60_unknown = (!unknown.is_empty()).then(|| bucket(0.0, f64::INFINITY, &unknown));
        Ok(Self { method, ablation, records, lsd, segsnr, stft_mse, by_distance, by_rt60, rt60_unknown })
    }
}

/// `(unprocessed - method) / unprocessed` for lower-is-better metrics, with the
/// sign flipped for higher-is-better ones.
pub fn relative_improvement(unprocessed: f64, method: f64, higher_is_better: bool) -> f64 {
    if higher_is_better {
        (method - unprocessed) / unprocessed.abs()
    } else {
        (unprocessed - method) / unprocessed
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Non-empty buckets only, in edge order.
fn buckets(records: &[SampleRecord], edges: &[f64], key: fn(&SampleRecord) -> Option<f64>) -> Vec<Bucket> {
    edges
        .windows(2)
        .filter_map(|w| {
            let members: Vec<&SampleRecord> = records.iter().filter(|r| key(r).is_some_and(|k| k >= w[0] && k < w[1])).collect();
            (!members.is_empty()).then(|| bucket(w[0], w[1], &members))
        })
        .collect()
}

fn bucket(lo: f64, hi: f64, members: &[&SampleRecord]) -> Bucket {
    let m = |f: fn(&SampleRecord) -> f64| members.iter().map(|r| f(r)).sum::<f64>() / members.len() as f64;
    Bucket { lo, hi, count: members.len(), mean_lsd: m(|r| r.lsd), mean_segsnr: m(|r| r.segsnr), mean_stft_mse: m(|r| r.stft_mse) }
}
