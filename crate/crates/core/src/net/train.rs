use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{batch_objective, LossWeights};
use super::model::{panorama_tensor, segment_tensor, ForwardPass, VidaModel};
use crate::forge::segment_count;
use crate::signal::LogMagPhase;
use crate::tensor::{adam_step, AdamConfig, Grads, Tensor};
use crate::view::{roll_panorama, Panorama};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub lambda_phase: f64,
    pub lambda_match: f64,
    pub margin: f64,
    /// Roll each panorama by a random angle before it enters the tower.
    pub augment_rotation: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        Self {
            epochs: 150,
            batch_size: 8,
            lr_start: 1e-3,
            lr_end: 1e-4,
            lambda_phase: w.lambda_phase,
            lambda_match: w.lambda_match,
            margin: w.margin,
            augment_rotation: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights { lambda_phase: self.lambda_phase, lambda_match: self.lambda_match, margin: self.margin }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(alloc::format!("train: {msg}")));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.lambda_phase >= 0.0 && self.lambda_match >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        if !(self.margin >= 0.0) {
            return bad("margin must be non-negative");
        }
        Ok(())
    }
}

/// Exponential decay from `lr_start` at epoch 0 to `lr_end` at `epochs`.
pub fn learning_rate(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.lr_start * (cfg.lr_end / cfg.lr_start).powf(epoch as f64 / cfg.epochs as f64)
}

/// Runs a closure over a slice, possibly in parallel. Results must come back
/// in input order.
pub trait Mapper: Sync {
    fn map<I, O, F>(&self, items: &[I], f: F) -> Vec<O>
    where
        I: Sync,
        O: Send,
        F: Fn(&I) -> O + Sync + Send;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Mapper for Serial {
    fn map<I, O, F>(&self, items: &[I], f: F) -> Vec<O>
    where
        I: Sync,
        O: Send,
        F: Fn(&I) -> O + Sync + Send,
    {
        items.iter().map(f).collect()
    }
}

/// Training examples addressed by index.
pub trait ExampleSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn segment_count(&self, index: usize) -> usize;

    /// Reverberant input and clean target of one segment, both `[2, window, bins]`.
    fn pair(&self, index: usize, segment: usize) -> Result<(Tensor<f32>, Tensor<f32>)>;

    fn panorama(&self, index: usize) -> Result<Option<Panorama>>;
}

/// Whole-utterance spectrograms held in memory in single precision.
#[derive(Debug, Clone)]
pub struct PreparedExample {
    reverb: Tensor<f32>,
    clean: Tensor<f32>,
    pub panorama: Option<Panorama>,
}

impl PreparedExample {
    /// The clean spectrogram is fitted to the reverberant frame count.
    pub fn new(reverb: &LogMagPhase, clean: &LogMagPhase, panorama: Option<Panorama>) -> Self {
        Self { reverb: segment_tensor(reverb), clean: segment_tensor(&clean.fit_frames(reverb.frames)), panorama }
    }

    pub fn frames(&self) -> usize {
        self.reverb.shape()[1]
    }
}

#[derive(Debug, Clone)]
pub struct MemorySource {
    pub window: usize,
    pub examples: Vec<PreparedExample>,
}

/// Frames `[start, start + window)` of a `[2, T, F]` tensor, silence past the end.
fn window_of(t: &Tensor<f32>, start: usize, window: usize) -> Tensor<f32> {
    let (frames, bins) = (t.shape()[1], t.shape()[2]);
    let floor = crate::signal::MAG_FLOOR.ln() as f32;
    let mut out = Tensor::zeros(&[2, window, bins]);
    let (m, p) = out.data_mut().split_at_mut(window * bins);
    m.fill(floor);
    let avail = frames.saturating_sub(start).min(window) * bins;
    let plane = frames * bins;
    let src = t.data();
    m[..avail].copy_from_slice(&src[start * bins..start * bins + avail]);
    p[..avail].copy_from_slice(&src[plane + start * bins..plane + start * bins + avail]);
    out
}

impl ExampleSource for MemorySource {
    fn len(&self) -> usize {
        self.examples.len()
    }

    fn segment_count(&self, index: usize) -> usize {
        segment_count(self.examples[index].frames(), self.window, self.window / 2)
    }

    fn pair(&self, index: usize, segment: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let e = &self.examples[index];
        let start = segment * self.window / 2;
        Ok((window_of(&e.reverb, start, self.window), window_of(&e.clean, start, self.window)))
    }

    fn panorama(&self, index: usize) -> Result<Option<Panorama>> {
        Ok(self.examples[index].panorama.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    pub magnitude: f64,
    pub phase: f64,
    pub matching: f64,
    pub total: f64,
    pub lr: f64,
    /// This batch finished its epoch.
    pub epoch_end: bool,
}

#[derive(Debug, Clone, Copy)]
struct Draw {
    example: usize,
    segment: usize,
    angle: f64,
    negative: Option<usize>,
}

/// A deterministic stream of Adam updates over shuffled epochs.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
    step: u64,
    adam: AdamConfig,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, examples: usize) -> Result<Self> {
        cfg.validate()?;
        if examples == 0 {
            return Err(Error::EmptyInput);
        }
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self { cfg, rng, order: (0..examples).collect(), cursor: examples, epoch: 0, step: 0, adam: AdamConfig::default() })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f64 {
        learning_rate(&self.cfg, self.epoch)
    }

    fn draw_batch<S: ExampleSource>(&mut self, source: &S) -> Vec<Draw> {
        if self.cursor >= self.order.len() {
            if self.step > 0 {
                self.epoch += 1;
            }
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.cfg.batch_size).min(self.order.len());
        let picked: Vec<usize> = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        let b = picked.len();
        picked
            .iter()
            .enumerate()
            .map(|(i, &example)| {
                let segment = self.rng.gen_range(0..source.segment_count(example));
                let angle = if self.cfg.augment_rotation { self.rng.gen_range(0.0..360.0) } else { 0.0 };
                let negative = (b > 1).then(|| {
                    let j = self.rng.gen_range(0..b - 1);
                    if j >= i {
                        j + 1
                    } else {
                        j
                    }
                });
                Draw { example, segment, angle, negative }
            })
            .collect()
    }

    /// One Adam update on the next batch. On error the model is unchanged.
    pub fn step<S: ExampleSource, M: Mapper>(&mut self, model: &mut VidaModel<f32>, source: &S, mapper: &M) -> Result<StepRecord> {
        let draws = self.draw_batch(source);
        let lr = self.lr();
        let shared: &VidaModel<f32> = model;
        let forward = mapper.map(&draws, |d| -> Result<(ForwardPass<f32>, Tensor<f32>)> {
            let (input, target) = source.pair(d.example, d.segment)?;
            let pano = if shared.is_audio_only() {
                None
            } else {
                let p = source.panorama(d.example)?.ok_or_else(|| Error::InvalidConfig("visual model needs panoramas".into()))?;
                Some(panorama_tensor::<f32>(&roll_panorama(&p, d.angle)))
            };
            Ok((shared.forward(&input, pano.as_ref())?, target))
        });
        let (passes, targets): (Vec<_>, Vec<_>) = forward.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
        if passes.iter().any(|p| !(p.output.all_finite() && p.e_s.all_finite() && p.e_c.all_finite())) {
            return Err(Error::NonFiniteLoss(self.step));
        }
        let negatives: Vec<Option<usize>> = draws.iter().map(|d| d.negative).collect();
        let mut weights = self.cfg.weights();
        if shared.is_audio_only() {
            weights.lambda_match = 0.0;
        }
        let loss = batch_objective(&passes, &targets, &negatives, &weights)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss(self.step));
        }
        let indices: Vec<usize> = (0..passes.len()).collect();
        let partial = mapper.map(&indices, |&i| -> Result<Grads<f32>> {
            let mut g = shared.params().zero_grads();
            shared.backward(&passes[i], &loss.grads[i], &mut g)?;
            Ok(g)
        });
        let mut total = model.params().zero_grads();
        for g in partial {
            total.add_all(&g?);
        }
        model.params_mut().accumulate(&total);
        if let Err(e) = adam_step(model.params_mut(), lr, &self.adam) {
            model.params_mut().iter_mut().for_each(|p| p.grad.fill(0.0));
            return Err(e);
        }
        let record = StepRecord {
            epoch: self.epoch,
            step: self.step,
            magnitude: loss.magnitude,
            phase: loss.phase,
            matching: loss.matching,
            total: loss.total,
            lr,
            epoch_end: self.cursor >= self.order.len(),
        };
        self.step += 1;
        Ok(record)
    }
}

/// Fraction of rows whose nearest column embedding, after unit
/// normalization, is its own partner.
pub fn retrieval_accuracy(e_c: &[Vec<f64>], e_s: &[Vec<f64>]) -> f64 {
    let unit = |v: &Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        v.iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let (c, s): (Vec<_>, Vec<_>) = (e_c.iter().map(unit).collect(), e_s.iter().map(unit).collect());
    let hits = c
        .iter()
        .enumerate()
        .filter(|(i, a)| {
            let d = |b: &Vec<f64>| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            let best = (0..s.len()).min_by(|&x, &y| d(&s[x]).total_cmp(&d(&s[y])));
            best == Some(*i)
        })
        .count();
    hits as f64 / e_c.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ModelConfig;

    #[test]
    fn schedule_endpoints() {
        let cfg = TrainConfig::default();
        assert_eq!(learning_rate(&cfg, 0), 1e-3);
        assert!((learning_rate(&cfg, 150) - 1e-4).abs() < 1e-18);
        assert!((learning_rate(&cfg, 75) - 1e-3 * 0.1f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn retrieval_counts_self_matches() {
        let e: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        assert_eq!(retrieval_accuracy(&e, &e), 1.0);
        let mut shuffled = e.clone();
        shuffled.swap(0, 1);
        assert_eq!(retrieval_accuracy(&e, &shuffled), 0.5);
    }

    fn tiny_source(n: usize, with_pano: bool) -> MemorySource {
        let examples = (0..n)
            .map(|k| {
                let frames = 40 + 7 * k;
                let mag = (0..frames * 32).map(|i| ((i + k) as f64 * 0.37).sin()).collect();
                let phase = (0..frames * 32).map(|i| ((i * 3 + k) as f64 * 0.11).cos()).collect();
                let rev = LogMagPhase::new(frames, 32, mag, phase).unwrap();
                let clean = LogMagPhase { mag: rev.mag.iter().map(|v| v * 0.5).collect(), ..rev.clone() };
                let pano = with_pano.then(|| {
                    let n = 16 * 64;
                    Panorama::from_channels(64, 16, [alloc::vec![2.0; n], alloc::vec![0.5 + 0.1 * k as f64; n], alloc::vec![0.0; n]]).unwrap()
                });
                PreparedExample::new(&rev, &clean, pano)
            })
            .collect();
        MemorySource { window: 32, examples }
    }

    fn tiny_model() -> ModelConfig {
        let mut cfg = ModelConfig::toy();
        cfg.unet.window = 32;
        cfg.unet.bins = 32;
        cfg.unet.depth = 3;
        cfg.unet.base_channels = 4;
        cfg
    }

    #[test]
    fn memory_source_pads_with_silence() {
        let src = tiny_source(1, false);
        assert_eq!(src.segment_count(0), 2);
        let (rev, _) = src.pair(0, 1).unwrap();
        let floor = crate::signal::MAG_FLOOR.ln() as f32;
        // Segment 1 covers frames 16..48 of 40, so window offsets 24.. are padding.
        assert_eq!(rev.data()[24 * 32], floor);
        assert_ne!(rev.data()[23 * 32], floor);
    }

    #[test]
    fn runs_are_reproducible() {
        let src = tiny_source(3, true);
        let run = || {
            let mut model = VidaModel::<f32>::new(tiny_model()).unwrap();
            let cfg = TrainConfig { batch_size: 2, epochs: 3, seed: 9, ..TrainConfig::default() };
            let mut t = Trainer::new(cfg, src.len()).unwrap();
            let log: Vec<StepRecord> = (0..5).map(|_| t.step(&mut model, &src, &Serial).unwrap()).collect();
            (log, model.params().clone())
        };
        let (a, pa) = run();
        let (b, pb) = run();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        // Three examples in batches of two: epochs end on odd steps.
        assert_eq!(a.iter().map(|r| r.epoch_end).collect::<Vec<_>>(), [false, true, false, true, false]);
        assert_eq!(a.iter().map(|r| r.epoch).collect::<Vec<_>>(), [0, 0, 1, 1, 2]);
    }

    #[test]
    fn loss_decreases_on_one_example() {
        let src = tiny_source(1, true);
        let mut model = VidaModel::<f32>::new(tiny_model()).unwrap();
        let cfg = TrainConfig { batch_size: 1, augment_rotation: false, lr_start: 3e-3, lr_end: 3e-3, ..TrainConfig::default() };
        let mut t = Trainer::new(cfg, 1).unwrap();
        let first = t.step(&mut model, &src, &Serial).unwrap().magnitude;
        let mut last = first;
        for _ in 0..60 {
            last = t.step(&mut model, &src, &Serial).unwrap().magnitude;
        }
        assert!(last < 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn non_finite_loss_leaves_model_untouched() {
        let mut src = tiny_source(2, true);
        src.examples.iter_mut().for_each(|e| e.reverb.fill(f32::NAN));
        let mut model = VidaModel::<f32>::new(tiny_model()).unwrap();
        let before = model.params().clone();
        let mut t = Trainer::new(TrainConfig { batch_size: 2, ..TrainConfig::default() }, 2).unwrap();
        assert_eq!(t.step(&mut model, &src, &Serial).unwrap_err(), Error::NonFiniteLoss(0));
        assert_eq!(model.params(), &before);
    }
}
