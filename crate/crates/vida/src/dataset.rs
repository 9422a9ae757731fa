//! On-disk datasets: one directory per sample plus a JSON-lines manifest.
//!
//! ```text
//! root/dataset.json
//! root/manifest.jsonl
//! root/<split>/<id>/{clean.wav, reverb.wav, rir.wav, pano.bin, meta.json}
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vida_core::forge::{build_sample, sample_rng, synthetic_speech, SampleMeta, Split};
use vida_core::signal::AudioClip;
use vida_core::view::Panorama;

use crate::config::{hex, PipelineConfig};
use crate::error::{Result, VidaError};
use crate::tensor_file::{read_panorama, write_panorama};
use crate::wav::{read_wav, write_rir, write_wav};

pub const MANIFEST: &str = "manifest.jsonl";
pub const INFO: &str = "dataset.json";
const FILES: [&str; 5] = ["clean.wav", "reverb.wav", "rir.wav", "pano.bin", "meta.json"];
/// Offsets the master seed for clean-speech and noise choices so they never
/// share a stream with the scene draw.
const SOURCE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone)]
pub enum CleanSource {
    Synthetic,
    /// Mono WAVs at the pipeline rate; each sample crops a random excerpt.
    Corpus(Vec<AudioClip>),
}

impl CleanSource {
    pub fn corpus(dir: &Path) -> Result<Self> {
        Ok(CleanSource::Corpus(load_dir(dir)?))
    }

    fn describe(&self) -> String {
        match self {
            CleanSource::Synthetic => "synthetic".into(),
            CleanSource::Corpus(c) => format!("corpus ({} files)", c.len()),
        }
    }
}

/// Every `.wav` under `dir`, sorted by path.
pub fn load_dir(dir: &Path) -> Result<Vec<AudioClip>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| VidaError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(VidaError::format(dir, "no .wav files"));
    }
    paths.iter().map(|p| read_wav(p)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub split: Split,
    pub id: String,
    /// Relative to the dataset root.
    pub dir: String,
    pub meta: SampleMeta,
    /// SHA-256 of each file in the sample directory.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub config_digest: String,
    pub rng_seed: u64,
    pub source: String,
    pub counts: BTreeMap<String, usize>,
    pub manifest_sha256: String,
}

#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub clean: AudioClip,
    pub reverb: AudioClip,
    pub panorama: Panorama,
    pub meta: SampleMeta,
}

fn pick_excerpt<R: Rng>(pool: &[AudioClip], len: usize, rng: &mut R) -> Result<AudioClip> {
    let long: Vec<&AudioClip> = pool.iter().filter(|c| c.len() >= len).collect();
    if long.is_empty() {
        return Err(vida_core::Error::InputTooShort { needed: len, got: pool.iter().map(|c| c.len()).max().unwrap_or(0) }.into());
    }
    let clip = long[rng.gen_range(0..long.len())];
    let start = rng.gen_range(0..=clip.len() - len);
    Ok(AudioClip { samples: clip.samples[start..start + len].to_vec(), sample_rate: clip.sample_rate })
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| VidaError::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn build_one(cfg: &PipelineConfig, source: &CleanSource, noise: Option<&[AudioClip]>, root: &Path, split: Split, index: usize) -> Result<ManifestEntry> {
    let sr = vida_core::PIPELINE_RATE;
    let len = (cfg.sampler.clip_seconds * sr as f64).round() as usize;
    let mut rng = sample_rng(cfg.sampler.rng_seed ^ SOURCE_SALT, split, index);
    let clean = match source {
        CleanSource::Synthetic => synthetic_speech(&mut rng, cfg.sampler.clip_seconds, sr),
        CleanSource::Corpus(pool) => pick_excerpt(pool, len, &mut rng)?,
    };
    // The mixer crops its own excerpt, so the whole file is passed on.
    let noise = noise.map(|pool| &pool[rng.gen_range(0..pool.len())]);
    let sample = build_sample(&clean, &cfg.sampler, &cfg.view, noise, split, index)?;
    let rel = format!("{}/{}", split.name(), sample.meta.id);
    let dir = root.join(&rel);
    std::fs::create_dir_all(&dir).map_err(|e| VidaError::io(&dir, e))?;
    write_wav(&dir.join("clean.wav"), &sample.clean)?;
    write_wav(&dir.join("reverb.wav"), &sample.reverb)?;
    write_rir(&dir.join("rir.wav"), &sample.rir)?;
    write_panorama(&dir.join("pano.bin"), &sample.panorama)?;
    let meta_path = dir.join("meta.json");
    let meta_json = serde_json::json!({ "meta": sample.meta, "config_digest": cfg.digest(), "rng_seed": cfg.sampler.rng_seed });
    std::fs::write(&meta_path, serde_json::to_vec_pretty(&meta_json).expect("meta serializes")).map_err(|e| VidaError::io(&meta_path, e))?;
    let files = FILES.iter().map(|f| Ok((f.to_string(), sha256_file(&dir.join(f))?))).collect::<Result<_>>()?;
    Ok(ManifestEntry { split, id: sample.meta.id.clone(), dir: rel, meta: sample.meta, files })
}

/// Synthesize every split into `root`. Samples are independent, so they are
/// built in parallel; the manifest is written in (split, index) order.
pub fn build_dataset(cfg: &PipelineConfig, source: &CleanSource, root: &Path) -> Result<DatasetInfo> {
    cfg.validate()?;
    let noise = match (&cfg.sampler.noise_corpus, cfg.sampler.snr_db) {
        (Some(dir), Some(_)) => Some(load_dir(Path::new(dir))?),
        (Some(_), None) | (None, Some(_)) => return Err(VidaError::Config("sampler.noise_corpus and sampler.snr_db go together".into())),
        (None, None) => None,
    };
    std::fs::create_dir_all(root).map_err(|e| VidaError::io(root, e))?;
    let jobs: Vec<(Split, usize)> = Split::ALL.iter().flat_map(|&s| (0..cfg.sampler.split_size(s)).map(move |i| (s, i))).collect();
    let entries = jobs
        .par_iter()
        .map(|&(split, index)| build_one(cfg, source, noise.as_deref(), root, split, index))
        .collect::<Result<Vec<_>>>()?;

    let mut manifest = Vec::new();
    for e in &entries {
        serde_json::to_writer(&mut manifest, e).expect("entry serializes");
        manifest.push(b'\n');
    }
    let path = root.join(MANIFEST);
    std::fs::write(&path, &manifest).map_err(|e| VidaError::io(&path, e))?;
    let info = DatasetInfo {
        config_digest: cfg.digest(),
        rng_seed: cfg.sampler.rng_seed,
        source: source.describe(),
        counts: Split::ALL.iter().map(|s| (s.name().to_string(), cfg.sampler.split_size(*s))).collect(),
        manifest_sha256: hex(&Sha256::digest(&manifest)),
    };
    let info_path = root.join(INFO);
    let mut f = std::fs::File::create(&info_path).map_err(|e| VidaError::io(&info_path, e))?;
    serde_json::to_writer_pretty(&mut f, &info).expect("info serializes");
    f.write_all(b"\n").map_err(|e| VidaError::io(&info_path, e))?;
    Ok(info)
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub info: DatasetInfo,
    pub entries: Vec<ManifestEntry>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let info_path = root.join(INFO);
        let info: DatasetInfo = serde_json::from_slice(&std::fs::read(&info_path).map_err(|e| VidaError::io(&info_path, e))?)
            .map_err(|e| VidaError::format(&info_path, e))?;
        let path = root.join(MANIFEST);
        let text = std::fs::read(&path).map_err(|e| VidaError::io(&path, e))?;
        if hex(&Sha256::digest(&text)) != info.manifest_sha256 {
            return Err(VidaError::format(&path, "manifest hash does not match dataset.json"));
        }
        let entries = text
            .split(|&b| b == b'\n')
            .filter(|l| !l.is_empty())
            .map(|l| serde_json::from_slice(l).map_err(|e| VidaError::format(&path, e)))
            .collect::<Result<Vec<ManifestEntry>>>()?;
        Ok(Self { root: root.to_path_buf(), info, entries })
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    /// Read one sample, checking every file against its manifest hash.
    pub fn load(&self, entry: &ManifestEntry) -> Result<LoadedSample> {
        let dir = self.root.join(&entry.dir);
        for (name, want) in &entry.files {
            if &sha256_file(&dir.join(name))? != want {
                return Err(VidaError::format(dir.join(name), "content does not match manifest"));
            }
        }
        Ok(LoadedSample {
            clean: read_wav(&dir.join("clean.wav"))?,
            reverb: read_wav(&dir.join("reverb.wav"))?,
            panorama: read_panorama(&dir.join("pano.bin"))?,
            meta: entry.meta.clone(),
        })
    }
}
