//! Training driver: loads a split into memory and runs the optimizer with
//! per-example work spread over rayon.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use vida_core::forge::Split;
use vida_core::net::{Mapper, MemorySource, PreparedExample, StepRecord, Trainer, VidaModel};
use vida_core::signal::{stft, LogMagPhase};

use crate::checkpoint::{save, CheckpointHeader};
use crate::config::PipelineConfig;
use crate::dataset::Dataset;
use crate::error::{Result, VidaError};

#[derive(Debug, Clone, Copy, Default)]
pub struct RayonMapper;

impl Mapper for RayonMapper {
    fn map<I, O, F>(&self, items: &[I], f: F) -> Vec<O>
    where
        I: Sync,
        O: Send,
        F: Fn(&I) -> O + Sync + Send,
    {
        items.par_iter().map(f).collect()
    }
}

/// Every sample of `split` as log-magnitude/phase spectrograms under the
/// pipeline STFT. Panoramas are kept only for visual models.
pub fn prepare_source(cfg: &PipelineConfig, ds: &Dataset, split: Split) -> Result<MemorySource> {
    let entries = ds.split(split);
    if entries.is_empty() {
        return Err(VidaError::format(&ds.root, format!("{} split is empty", split.name())));
    }
    let visual = !cfg.model.audio_only;
    let examples = entries
        .par_iter()
        .map(|e| {
            let s = ds.load(e)?;
            let reverb = LogMagPhase::encode(&stft(&s.reverb, &cfg.stft)?);
            let clean = LogMagPhase::encode(&stft(&s.clean, &cfg.stft)?);
            Ok(PreparedExample::new(&reverb, &clean, visual.then_some(s.panorama)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MemorySource { window: cfg.model.unet.window, examples })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub config_digest: String,
    pub seed: u64,
    pub steps: u64,
    pub epochs_completed: usize,
    pub last: Option<StepRecord>,
    pub checkpoint: PathBuf,
}

pub const CHECKPOINT: &str = "model.ckpt";
pub const LOSS_LOG: &str = "loss.jsonl";
pub const SUMMARY: &str = "train.json";

/// Train from scratch into `out`. The checkpoint is rewritten at the end of
/// every epoch and once more when training stops; `max_steps` caps the run.
pub fn train(cfg: &PipelineConfig, ds: &Dataset, out: &Path, max_steps: Option<u64>) -> Result<TrainSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| VidaError::io(out, e))?;
    let source = prepare_source(cfg, ds, Split::Train)?;
    let mut model = VidaModel::<f32>::new(cfg.model.clone())?;
    let mut trainer = Trainer::new(cfg.train.clone(), source.examples.len())?;
    let ckpt = out.join(CHECKPOINT);
    let log_path = out.join(LOSS_LOG);
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path).map_err(|e| VidaError::io(&log_path, e))?);
    let mut last = None;
    let mut epochs_completed = 0;
    while max_steps.is_none_or(|m| trainer.steps() < m) && epochs_completed < cfg.train.epochs {
        let rec = trainer.step(&mut model, &source, &RayonMapper)?;
        serde_json::to_writer(&mut log, &rec).expect("record serializes");
        log.write_all(b"\n").map_err(|e| VidaError::io(&log_path, e))?;
        if rec.epoch_end {
            epochs_completed = rec.epoch + 1;
            save(&ckpt, &CheckpointHeader::new(cfg, epochs_completed, trainer.steps()), &model)?;
        }
        last = Some(rec);
    }
    log.flush().map_err(|e| VidaError::io(&log_path, e))?;
    save(&ckpt, &CheckpointHeader::new(cfg, epochs_completed, trainer.steps()), &model)?;
    let summary = TrainSummary {
        config_digest: cfg.digest(),
        seed: cfg.train.seed,
        steps: trainer.steps(),
        epochs_completed,
        last,
        checkpoint: ckpt,
    };
    let path = out.join(SUMMARY);
    std::fs::write(&path, serde_json::to_vec_pretty(&summary).expect("summary serializes")).map_err(|e| VidaError::io(&path, e))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use vida_core::net::{ModelConfig, Serial};

    #[test]
    fn rayon_mapper_keeps_order() {
        let xs: Vec<u32> = (0..1000).collect();
        assert_eq!(RayonMapper.map(&xs, |x| x * 2), Serial.map(&xs, |x| x * 2));
    }

    #[test]
    fn short_run_writes_log_and_checkpoint() {
        let data = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.model = ModelConfig::toy();
        cfg.view.width = cfg.model.van.width;
        cfg.view.height = cfg.model.van.height;
        cfg.sampler.train_samples = 3;
        cfg.sampler.val_samples = 1;
        cfg.sampler.test_samples = 1;
        cfg.sampler.max_order = 4;
        cfg.train.batch_size = 2;
        crate::dataset::build_dataset(&cfg, &crate::dataset::CleanSource::Synthetic, data.path()).unwrap();
        let ds = Dataset::open(data.path()).unwrap();
        let s = train(&cfg, &ds, out.path(), Some(3)).unwrap();
        assert_eq!(s.steps, 3);
        // Three examples at batch two: the second step closes epoch one.
        assert_eq!(s.epochs_completed, 1);
        let log = std::fs::read_to_string(out.path().join(LOSS_LOG)).unwrap();
        assert_eq!(log.lines().count(), 3);
        let (h, _) = crate::checkpoint::load(&s.checkpoint).unwrap();
        assert_eq!((h.step, h.config_digest), (3, cfg.digest()));
    }
}
