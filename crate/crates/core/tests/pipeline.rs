//! Cross-module paths through the core: scene synthesis, analysis, the
//! segment codec, the model and the baselines.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vida_core::forge::{build_sample, segment_spectrogram, stitch_segments, synthetic_speech, BuiltSample, SceneSamplerConfig, Split};
use vida_core::metrics::lsd;
use vida_core::net::{dereverberate_full, predict_spectrogram, MemorySource, ModelConfig, PreparedExample, Serial, Trainer, TrainConfig, VidaModel};
use vida_core::signal::{istft, stft, LogMagPhase, StftConfig};
use vida_core::view::ViewConfig;
use vida_core::wpe::{wpe_clip, WpeConfig};

fn sample(index: usize, view: &ViewConfig) -> BuiltSample {
    let mut rng = ChaCha8Rng::seed_from_u64(index as u64);
    let clean = synthetic_speech(&mut rng, 2.56, 16_000);
    let cfg = SceneSamplerConfig { max_order: 12, ..SceneSamplerConfig::default() };
    build_sample(&clean, &cfg, view, None, Split::Test, index).unwrap()
}

fn toy_view() -> ViewConfig {
    ViewConfig { width: 64, height: 16, ..ViewConfig::default() }
}

#[test]
fn codec_and_segments_preserve_a_rendered_spectrogram() {
    let s = sample(0, &ViewConfig::default());
    let cfg = StftConfig::DESK.full_band();
    let spec = stft(&s.reverb, &cfg).unwrap();
    let enc = LogMagPhase::encode(&spec);
    let segs: Vec<LogMagPhase> = segment_spectrogram(&enc, 64, 32).unwrap().into_iter().map(|s| s.data).collect();
    let back = stitch_segments(&segs, 64, enc.frames).unwrap().decode(cfg).unwrap();
    let peak = spec.data.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let err = spec.data.iter().zip(&back.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-9 * peak, "{err}");
    let y = istft(&back).unwrap();
    let interior = 100..y.len() - 100;
    let worst = interior.map(|i| (y.samples[i] - s.reverb.samples[i]).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn untrained_models_keep_length_and_stay_finite() {
    let s = sample(1, &toy_view());
    for audio_only in [false, true] {
        let model = VidaModel::<f32>::new(ModelConfig { audio_only, ..ModelConfig::toy() }).unwrap();
        let out = dereverberate_full(&model, &s.reverb, Some(&s.panorama), &StftConfig::DESK, 5).unwrap();
        assert_eq!(out.len(), s.reverb.len());
        assert!(out.samples.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn a_few_steps_fit_one_utterance() {
    let s = sample(2, &toy_view());
    let enc = |c| LogMagPhase::encode(&stft(c, &StftConfig::DESK).unwrap());
    let (reverb, clean) = (enc(&s.reverb), enc(&s.clean));
    let source = MemorySource { window: 64, examples: vec![PreparedExample::new(&reverb, &clean, Some(s.panorama.clone()))] };
    let mut model = VidaModel::<f32>::new(ModelConfig::toy()).unwrap();
    let cfg = TrainConfig { batch_size: 1, epochs: 40, augment_rotation: false, ..TrainConfig::default() };
    let mut trainer = Trainer::new(cfg, 1).unwrap();
    let err = |m: &VidaModel<f32>| {
        let y = predict_spectrogram(m, &reverb, Some(&s.panorama)).unwrap();
        y.mag.iter().zip(&clean.mag).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.mag.len() as f64
    };
    let before = err(&model);
    for _ in 0..40 {
        trainer.step(&mut model, &source, &Serial).unwrap();
    }
    let after = err(&model);
    assert!(after < 0.5 * before, "{before} -> {after}");
}

#[test]
fn wpe_lowers_log_spectral_distance_on_reverberant_renders() {
    let mut before = 0.0;
    let mut after = 0.0;
    for i in 3..7 {
        let s = sample(i, &ViewConfig::default());
        before += lsd(&s.clean, &s.reverb, &StftConfig::DESK).unwrap();
        after += lsd(&s.clean, &wpe_clip(&s.reverb, &WpeConfig::default()).unwrap(), &StftConfig::DESK).unwrap();
    }
    assert!(after < before, "{before} -> {after}");
}
