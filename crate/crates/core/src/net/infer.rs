use alloc::vec::Vec;

use super::model::{panorama_tensor, segment_tensor, tensor_segment, VidaModel};
use crate::forge::{segment_spectrogram, stitch_segments};
use crate::signal::{griffin_lim, stft, AudioClip, LogMagPhase, PhaseInit, StftConfig};
use crate::view::Panorama;
use crate::{Error, Real, Result};

/// Run the model over every segment of `reverb` with one shared conditioning
/// vector and stitch the predictions back to the input frame count.
pub fn predict_spectrogram<T: Real>(model: &VidaModel<T>, reverb: &LogMagPhase, pano: Option<&Panorama>) -> Result<LogMagPhase> {
    let u = &model.config().unet;
    if reverb.bins != u.bins {
        return Err(Error::InvalidConfig(alloc::format!("checkpoint expects {} bins, input has {}", u.bins, reverb.bins)));
    }
    let pano = match (model.is_audio_only(), pano) {
        (true, _) => None,
        (false, Some(p)) => Some(panorama_tensor::<T>(p)),
        (false, None) => return Err(Error::InvalidConfig("visual checkpoint needs a panorama".into())),
    };
    let e_c = model.embed_scene(pano.as_ref())?;
    let window = u.window;
    let predicted = segment_spectrogram(reverb, window, window / 2)?
        .iter()
        .map(|seg| {
            let (y, _) = model.predict(&segment_tensor::<T>(&seg.data), &e_c)?;
            tensor_segment(&y)
        })
        .collect::<Result<Vec<_>>>()?;
    stitch_segments(&predicted, window, reverb.frames)
}

/// Dereverberate a whole utterance: analysis, per-segment prediction,
/// stitching, then `gl_iters` Griffin-Lim iterations started from the
/// predicted phase. Bins that are exactly zero in the input stay zero.
pub fn dereverberate_full<T: Real>(
    model: &VidaModel<T>,
    reverb: &AudioClip,
    pano: Option<&Panorama>,
    config: &StftConfig,
    gl_iters: usize,
) -> Result<AudioClip> {
    let spec = stft(reverb, config)?;
    let encoded = LogMagPhase::encode(&spec);
    let predicted = predict_spectrogram(model, &encoded, pano)?;
    let mut magnitude = predicted.linear_magnitude();
    for (m, s) in magnitude.iter_mut().zip(&spec.data) {
        if s.norm() == 0.0 {
            *m = 0.0;
        }
    }
    let out = griffin_lim(&magnitude, predicted.frames, config, PhaseInit::Given(&predicted.phase), gl_iters)?;
    Ok(out.fit_to(reverb.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ModelConfig;
    use crate::signal::DEFAULT_GL_ITERS;

    fn tiny() -> VidaModel<f32> {
        let mut cfg = ModelConfig::toy();
        cfg.audio_only = true;
        VidaModel::new(cfg).unwrap()
    }

    fn chirp(n: usize) -> AudioClip {
        let s = (0..n).map(|i| (i as f64 * 0.01 + (i as f64 * 1e-5).powi(2)).sin() * 0.3).collect();
        AudioClip::new(s, crate::PIPELINE_RATE).unwrap()
    }

    #[test]
    fn silence_maps_to_silence() {
        let out = dereverberate_full(&tiny(), &AudioClip::zeros(4000, crate::PIPELINE_RATE), None, &StftConfig::DESK, DEFAULT_GL_ITERS).unwrap();
        assert_eq!(out.len(), 4000);
        assert!(out.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn repeated_calls_are_identical() {
        let clip = chirp(5000);
        let a = dereverberate_full(&tiny(), &clip, None, &StftConfig::DESK, 5).unwrap();
        let b = dereverberate_full(&tiny(), &clip, None, &StftConfig::DESK, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), clip.len());
    }

    #[test]
    fn mismatched_stft_is_rejected() {
        let err = dereverberate_full(&tiny(), &chirp(5000), None, &StftConfig::STANDARD, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        let short = dereverberate_full(&tiny(), &chirp(50), None, &StftConfig::DESK, 1).unwrap_err();
        assert!(matches!(short, Error::InputTooShort { .. }));
    }

    #[test]
    fn visual_model_requires_panorama() {
        let model = VidaModel::<f32>::new(ModelConfig::toy()).unwrap();
        let err = dereverberate_full(&model, &chirp(5000), None, &StftConfig::DESK, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }
}
