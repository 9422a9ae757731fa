//! Model checkpoints.
//!
//! Layout: magic `VCKP`, u32 version, u32 header length, JSON header, u32
//! parameter count, then per parameter its name, rank, dimensions and f32
//! values (all little endian), and finally a SHA-256 of everything before it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vida_core::net::{ModelConfig, VidaModel};
use vida_core::signal::StftConfig;
use vida_core::tensor::{Param, Tensor};
use vida_core::view::ViewConfig;

use crate::config::PipelineConfig;
use crate::error::{Result, VidaError};

const MAGIC: &[u8; 4] = b"VCKP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// Digest of the effective pipeline config the model was trained under.
    pub config_digest: String,
    pub model: ModelConfig,
    pub stft: StftConfig,
    pub view: ViewConfig,
    pub train_seed: u64,
    pub epoch: usize,
    pub step: u64,
}

impl CheckpointHeader {
    pub fn new(cfg: &PipelineConfig, epoch: usize, step: u64) -> Self {
        Self {
            config_digest: cfg.digest(),
            model: cfg.model.clone(),
            stft: cfg.stft,
            view: cfg.view,
            train_seed: cfg.train.seed,
            epoch,
            step,
        }
    }

    /// Refuse to run under a config whose analysis or view shapes differ.
    pub fn check_compatible(&self, cfg: &PipelineConfig) -> Result<()> {
        if self.stft != cfg.stft {
            return Err(VidaError::Mismatch(format!("checkpoint stft {:?}, config {:?}", self.stft, cfg.stft)));
        }
        if !self.model.audio_only && (self.view.width, self.view.height) != (cfg.view.width, cfg.view.height) {
            return Err(VidaError::Mismatch(format!(
                "checkpoint view {}x{}, config {}x{}",
                self.view.height, self.view.width, cfg.view.height, cfg.view.width
            )));
        }
        Ok(())
    }
}

pub fn encode(header: &CheckpointHeader, model: &VidaModel<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let json = serde_json::to_vec(header).expect("header serializes");
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for p in model.params().iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.at..self.at.checked_add(n)?)?;
        self.at += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<usize> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?) as usize)
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(CheckpointHeader, VidaModel<f32>)> {
    let bad = |d: &str| VidaError::format(path, d);
    if bytes.len() < 44 || &bytes[..4] != MAGIC {
        return Err(bad("not a checkpoint"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("checksum mismatch"));
    }
    let mut c = Cursor { bytes: body, at: 4 };
    let truncated = || bad("truncated");
    let version = c.u32().ok_or_else(truncated)?;
    if version != VERSION as usize {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n = c.u32().ok_or_else(truncated)?;
    let header: CheckpointHeader = serde_json::from_slice(c.take(n).ok_or_else(truncated)?).map_err(|e| bad(&e.to_string()))?;
    let count = c.u32().ok_or_else(truncated)?;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let len = c.u32().ok_or_else(truncated)?;
        let name = std::str::from_utf8(c.take(len).ok_or_else(truncated)?).map_err(|_| bad("parameter name is not UTF-8"))?.to_string();
        let rank = c.u32().ok_or_else(truncated)?;
        let shape = (0..rank).map(|_| c.u32()).collect::<Option<Vec<_>>>().ok_or_else(truncated)?;
        let size: usize = shape.iter().product();
        let raw = c.take(size.checked_mul(4).ok_or_else(truncated)?).ok_or_else(truncated)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        params.push(Param::new(name, Tensor::from_vec(&shape, data)?));
    }
    if c.at != body.len() {
        return Err(bad("trailing bytes"));
    }
    let mut model = VidaModel::<f32>::new(header.model.clone())?;
    model.params_mut().load(params).map_err(|e| VidaError::Mismatch(e.to_string()))?;
    Ok((header, model))
}

pub fn save(path: &Path, header: &CheckpointHeader, model: &VidaModel<f32>) -> Result<()> {
    // Write then rename so a crash never leaves a torn checkpoint.
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, encode(header, model)).map_err(|e| VidaError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| VidaError::io(path, e))
}

pub fn load(path: &Path) -> Result<(CheckpointHeader, VidaModel<f32>)> {
    let bytes = std::fs::read(path).map_err(|e| VidaError::io(path, e))?;
    decode(&bytes, path)
}
