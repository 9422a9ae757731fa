use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
// Needed for float math when std is absent from the graph.
#[allow(unused_imports)]
use num_traits::Float;

use super::{ComplexSpectrogram, StftConfig};
use crate::{Error, Result};

/// Floor added to magnitudes before the natural log.
pub const MAG_FLOOR: f64 = 1e-5;

/// Log-magnitude and phase planes of a spectrogram, `frames x bins` each.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMagPhase {
    pub frames: usize,
    pub bins: usize,
    pub mag: Vec<f64>,
    pub phase: Vec<f64>,
}

impl LogMagPhase {
    pub fn new(frames: usize, bins: usize, mag: Vec<f64>, phase: Vec<f64>) -> Result<Self> {
        if mag.len() != frames * bins || phase.len() != frames * bins {
            return Err(Error::shape(
                "log_mag_phase",
                alloc::format!("{frames}x{bins} with planes of {} and {}", mag.len(), phase.len()),
            ));
        }
        Ok(Self { frames, bins, mag, phase })
    }

    /// Silence: magnitude at the log floor, zero phase.
    pub fn silent(frames: usize, bins: usize) -> Self {
        Self {
            frames,
            bins,
            mag: alloc::vec![MAG_FLOOR.ln(); frames * bins],
            phase: alloc::vec![0.0; frames * bins],
        }
    }

    pub fn encode(spec: &ComplexSpectrogram) -> Self {
        let mut mag = Vec::with_capacity(spec.data.len());
        let mut phase = Vec::with_capacity(spec.data.len());
        for c in &spec.data {
            mag.push((c.norm() + MAG_FLOOR).ln());
            phase.push(canonical_angle(c.im.atan2(c.re)));
        }
        Self { frames: spec.frames, bins: spec.bins, mag, phase }
    }

    pub fn decode(&self, config: StftConfig) -> Result<ComplexSpectrogram> {
        if config.kept_bins != self.bins {
            return Err(Error::shape(
                "log_mag_phase",
                alloc::format!("{} bins, config keeps {}", self.bins, config.kept_bins),
            ));
        }
        let data = self
            .mag
            .iter()
            .zip(&self.phase)
            .map(|(&m, &p)| Complex64::from_polar((m.exp() - MAG_FLOOR).max(0.0), p))
            .collect();
        Ok(ComplexSpectrogram { frames: self.frames, bins: self.bins, data, config })
    }

    /// Linear magnitudes `max(exp(mag) - floor, 0)`.
    pub fn linear_magnitude(&self) -> Vec<f64> {
        self.mag.iter().map(|m| (m.exp() - MAG_FLOOR).max(0.0)).collect()
    }

    /// Zero-pad with silence or truncate to `frames` frames.
    pub fn fit_frames(&self, frames: usize) -> Self {
        let n = frames * self.bins;
        let mut out = Self::silent(frames, self.bins);
        let keep = n.min(self.mag.len());
        out.mag[..keep].copy_from_slice(&self.mag[..keep]);
        out.phase[..keep].copy_from_slice(&self.phase[..keep]);
        out
    }

    /// Frames `[start, start + len)`; frames past the end are silence.
    pub fn slice_frames(&self, start: usize, len: usize) -> Self {
        let mut out = Self::silent(len, self.bins);
        let avail = self.frames.saturating_sub(start).min(len);
        let (a, b) = (start * self.bins, (start + avail) * self.bins);
        out.mag[..avail * self.bins].copy_from_slice(&self.mag[a..b]);
        out.phase[..avail * self.bins].copy_from_slice(&self.phase[a..b]);
        out
    }
}

/// Map an `atan2` result into `(-pi, pi]`.
fn canonical_angle(a: f64) -> f64 {
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(c: Complex64) -> ComplexSpectrogram {
        let cfg = StftConfig { fft_size: 2, win_length: 1, hop_length: 1, kept_bins: 1 };
        ComplexSpectrogram { frames: 1, bins: 1, data: alloc::vec![c], config: cfg }
    }

    #[test]
    fn zero_and_unit_entries() {
        let z = LogMagPhase::encode(&single(Complex64::new(0.0, 0.0)));
        assert_eq!(z.mag[0], MAG_FLOOR.ln());
        assert_eq!(z.phase[0], 0.0);
        let u = LogMagPhase::encode(&single(Complex64::new(1.0, 0.0)));
        assert_eq!(u.mag[0], (1.0 + MAG_FLOOR).ln());
        assert_eq!(u.phase[0], 0.0);
    }

    #[test]
    fn negative_real_axis_maps_to_plus_pi() {
        let p = LogMagPhase::encode(&single(Complex64::new(-1.0, -0.0)));
        assert_eq!(p.phase[0], PI);
    }

    proptest! {
        #[test]
        fn codec_round_trip(r in 1e-3f64..100.0, theta in -3.14f64..3.14) {
            let c = Complex64::from_polar(r, theta);
            let s = single(c);
            let back = LogMagPhase::encode(&s).decode(s.config).unwrap();
            prop_assert!((back.data[0] - c).norm() / c.norm() < 1e-9);
        }
    }
}
