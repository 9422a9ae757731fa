//! Scoring methods over a dataset split and writing the reports.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;
use vida_core::forge::Split;
use vida_core::metrics::{Ablation, Bucket, MetricReport, Method, SampleRecord};
use vida_core::net::{dereverberate_full, VidaModel};
use vida_core::signal::AudioClip;
use vida_core::view::{remove_speaker, restrict_fov, Panorama};
use vida_core::wpe::wpe_clip;

use crate::checkpoint;
use crate::config::PipelineConfig;
use crate::dataset::{Dataset, LoadedSample};
use crate::error::{Result, VidaError};

/// What the visual model sees under an ablation.
pub fn ablate(cfg: &PipelineConfig, ablation: Ablation, pano: &Panorama) -> Panorama {
    match ablation {
        Ablation::FullPano | Ablation::NoMatching => pano.clone(),
        Ablation::Fov80 => restrict_fov(pano, cfg.eval.fov_center_azimuth, cfg.view.fov_degrees),
        Ablation::NoSpeaker => remove_speaker(pano),
    }
}

/// A method ready to run on clips.
pub enum Processor {
    Identity,
    Wpe,
    Model { model: VidaModel<f32>, ablation: Ablation },
}

impl Processor {
    /// Learned methods load `checkpoint`; its model kind must match `method`.
    pub fn new(cfg: &PipelineConfig, method: Method, ablation: Ablation, checkpoint: Option<&Path>) -> Result<Self> {
        if ablation != Ablation::FullPano && method != Method::Vida {
            return Err(VidaError::Usage(format!("ablation {} applies to the vida method only", ablation.name())));
        }
        match method {
            Method::None => Ok(Processor::Identity),
            Method::Wpe => Ok(Processor::Wpe),
            Method::AudioOnly | Method::Vida => {
                let path = checkpoint.ok_or_else(|| VidaError::Usage(format!("method {} needs --ckpt", method.name())))?;
                let proc = Self::from_checkpoint(cfg, path, ablation)?;
                if proc.method() != method {
                    return Err(VidaError::Mismatch(format!("{} holds a {} model, not {}", path.display(), proc.method().name(), method.name())));
                }
                Ok(proc)
            }
        }
    }

    /// Whichever model kind the checkpoint holds.
    pub fn from_checkpoint(cfg: &PipelineConfig, path: &Path, ablation: Ablation) -> Result<Self> {
        let (header, model) = checkpoint::load(path)?;
        header.check_compatible(cfg)?;
        Ok(Processor::Model { model, ablation })
    }

    pub fn method(&self) -> Method {
        match self {
            Processor::Identity => Method::None,
            Processor::Wpe => Method::Wpe,
            Processor::Model { model, .. } if model.is_audio_only() => Method::AudioOnly,
            Processor::Model { .. } => Method::Vida,
        }
    }

    pub fn run(&self, cfg: &PipelineConfig, reverb: &AudioClip, pano: Option<&Panorama>) -> Result<AudioClip> {
        Ok(match self {
            Processor::Identity => reverb.clone(),
            Processor::Wpe => wpe_clip(reverb, &cfg.wpe)?,
            Processor::Model { model, ablation } => {
                let pano = match (model.is_audio_only(), pano) {
                    (false, Some(p)) => Some(ablate(cfg, *ablation, p)),
                    _ => None,
                };
                dereverberate_full(model, reverb, pano.as_ref(), &cfg.stft, cfg.eval.gl_iters)?
            }
        })
    }
}

fn score(cfg: &PipelineConfig, method: Method, s: &LoadedSample, estimate: &AudioClip) -> Result<SampleRecord> {
    Ok(SampleRecord::score(&s.meta.id, method, &s.clean, estimate, &cfg.stft, s.meta.rt60, s.meta.distance)?)
}

/// Per-sample records of `method` and of the unprocessed input on `split`.
pub fn score_split(cfg: &PipelineConfig, ds: &Dataset, split: Split, method: Method, proc: &Processor) -> Result<(Vec<SampleRecord>, Vec<SampleRecord>)> {
    let entries = ds.split(split);
    if entries.is_empty() {
        return Err(VidaError::format(&ds.root, format!("{} split is empty", split.name())));
    }
    let pairs = entries
        .par_iter()
        .map(|e| {
            let s = ds.load(e)?;
            let base = score(cfg, Method::None, &s, &s.reverb)?;
            let out = proc.run(cfg, &s.reverb, Some(&s.panorama))?;
            Ok((score(cfg, method, &s, &out)?, base))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairs.into_iter().unzip())
}

pub fn evaluate(cfg: &PipelineConfig, ds: &Dataset, split: Split, method: Method, ablation: Ablation, checkpoint: Option<&Path>) -> Result<MetricReport> {
    let proc = Processor::new(cfg, method, ablation, checkpoint)?;
    let (records, baseline) = score_split(cfg, ds, split, method, &proc)?;
    Ok(MetricReport::build(method, ablation, records, Some(&baseline))?)
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{:+.1}%", 100.0 * v))
}

pub fn table(report: &MetricReport) -> String {
    let mut t = String::new();
    writeln!(t, "method {} / ablation {} / {} samples", report.method.name(), report.ablation.name(), report.records.len()).unwrap();
    writeln!(t, "{:<10} {:>10} {:>10} {:>10}", "metric", "mean", "median", "vs input").unwrap();
    for (name, a) in [("lsd_db", &report.lsd), ("segsnr_db", &report.segsnr), ("stft_mse", &report.stft_mse)] {
        writeln!(t, "{:<10} {:>10.4} {:>10.4} {:>10}", name, a.mean, a.median, pct(a.improvement)).unwrap();
    }
    t
}

fn curve(header: &str, digest: &str, buckets: &[Bucket], unknown: Option<&Bucket>) -> String {
    let mut t = format!("# config_digest {digest}\n{header}\tcount\tmean_lsd\tmean_segsnr\tmean_stft_mse\n");
    let row = |t: &mut String, label: String, b: &Bucket| {
        writeln!(t, "{label}\t{}\t{:.6}\t{:.6}\t{:.6e}", b.count, b.mean_lsd, b.mean_segsnr, b.mean_stft_mse).unwrap();
    };
    for b in buckets {
        row(&mut t, format!("{}-{}", b.lo, b.hi), b);
    }
    if let Some(b) = unknown {
        row(&mut t, "unknown".into(), b);
    }
    t
}

/// `report.jsonl`, `summary.json`, `table.txt` and the two bucket curves.
pub fn write_report(dir: &Path, cfg: &PipelineConfig, report: &MetricReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| VidaError::io(dir, e))?;
    let put = |name: &str, bytes: Vec<u8>| {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| VidaError::io(&p, e))
    };
    let digest = cfg.digest();
    let mut lines = Vec::new();
    for r in &report.records {
        serde_json::to_writer(&mut lines, r).expect("record serializes");
        lines.push(b'\n');
    }
    put("report.jsonl", lines)?;
    let summary = json!({
        "config_digest": digest,
        "seed": cfg.sampler.rng_seed,
        "method": report.method,
        "ablation": report.ablation,
        "samples": report.records.len(),
        "lsd": report.lsd,
        "segsnr": report.segsnr,
        "stft_mse": report.stft_mse,
        "by_distance": report.by_distance,
        "by_rt60": report.by_rt60,
        "rt60_unknown": report.rt60_unknown.as_ref().map(|b| b.count),
    });
    put("summary.json", serde_json::to_vec_pretty(&summary).expect("summary serializes"))?;
    put("table.txt", table(report).into_bytes())?;
    put("curves_distance.tsv", curve("distance_m", &digest, &report.by_distance, None).into_bytes())?;
    put("curves_rt60.tsv", curve("rt60_s", &digest, &report.by_rt60, report.rt60_unknown.as_ref()).into_bytes())
}
