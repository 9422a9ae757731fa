//! Finite-difference checks of every layer and of the full model objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use vida_core::net::{ModelCheck, ModelConfig, VidaModel};
use vida_core::tensor::gradcheck::{check_layers, grad_check};
use vida_core::tensor::Tensor;

use crate::config::PipelineConfig;
use crate::error::{Result, VidaError};

/// Largest relative error accepted on any checked coordinate.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
}

/// The layer suite, then the batch objective of `model` in double precision
/// on a batch of two random examples.
pub fn run(model: &ModelConfig, cfg: &PipelineConfig, seed: u64) -> Result<Vec<CheckRow>> {
    let mut rows: Vec<CheckRow> = check_layers(seed)?
        .into_iter()
        .map(|(name, r)| CheckRow { name, max_rel_error: r.max_rel_error, checked: r.checked, skipped_kinks: r.skipped_kinks })
        .collect();
    let model = VidaModel::<f64>::new(model.clone())?;
    let shape = [2, model.config().unet.window, model.config().unet.bins];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = || {
        let n = shape.iter().product();
        Tensor::from_vec(&shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    };
    let targets = vec![random()?, random()?];
    let name = if model.is_audio_only() { "model (audio-only)" } else { "model" }.to_string();
    let mut mc = ModelCheck { model, targets, weights: cfg.train.weights() };
    let shapes = mc.input_shapes();
    let refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
    let r = grad_check(&mut mc, &refs, seed)?;
    rows.push(CheckRow { name, max_rel_error: r.max_rel_error, checked: r.checked, skipped_kinks: r.skipped_kinks });
    Ok(rows)
}

/// `GradCheck` error naming every row over [`TOLERANCE`].
pub fn verdict(rows: &[CheckRow]) -> Result<()> {
    let bad: Vec<String> = rows
        .iter()
        .filter(|r| !(r.max_rel_error <= TOLERANCE))
        .map(|r| format!("{} ({:.3e})", r.name, r.max_rel_error))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(VidaError::GradCheck(bad.join(", ")))
    }
}
