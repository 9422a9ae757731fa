//! Mono WAV files. Integer and float encodings are read; writes are 32-bit float.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use vida_core::room::ImpulseResponse;
use vida_core::signal::AudioClip;

use crate::error::{Result, VidaError};

pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let reader = WavReader::open(path).map_err(|e| VidaError::format(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(VidaError::format(path, format!("{} channels, expected mono", spec.channels)));
    }
    let samples: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader.into_samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>(),
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader.into_samples::<i32>().map(|s| s.map(|v| v as f64 * scale)).collect::<Result<_, _>>()
        }
    }
    .map_err(|e| VidaError::format(path, e))?;
    Ok(AudioClip::new(samples, spec.sample_rate)?)
}

pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    write_samples(path, &clip.samples, clip.sample_rate)
}

pub fn write_rir(path: &Path, rir: &ImpulseResponse) -> Result<()> {
    write_samples(path, &rir.samples, rir.sample_rate)
}

fn write_samples(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = WavSpec { channels: 1, sample_rate, bits_per_sample: 32, sample_format: SampleFormat::Float };
    let fail = |e: hound::Error| VidaError::format(path, e);
    let mut w = WavWriter::create(path, spec).map_err(fail)?;
    for &s in samples {
        w.write_sample(s as f32).map_err(fail)?;
    }
    w.finalize().map_err(fail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_is_exact_for_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let clip = AudioClip::new((0..1000).map(|i| ((i as f64 * 0.37).sin() * 0.8) as f32 as f64).collect(), 16_000).unwrap();
        write_wav(&p, &clip).unwrap();
        assert_eq!(read_wav(&p).unwrap(), clip);
    }

    #[test]
    fn reads_16_bit_pcm_and_rejects_stereo() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pcm.wav");
        let spec = WavSpec { channels: 1, sample_rate: 8000, bits_per_sample: 16, sample_format: SampleFormat::Int };
        let mut w = WavWriter::create(&p, spec).unwrap();
        for v in [0i16, 16384, -32768] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let clip = read_wav(&p).unwrap();
        assert_eq!(clip.samples, vec![0.0, 0.5, -1.0]);
        assert_eq!(clip.sample_rate, 8000);

        let s = dir.path().join("stereo.wav");
        let mut w = WavWriter::create(&s, WavSpec { channels: 2, ..spec }).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&s), Err(VidaError::Format { .. })));
    }
}
