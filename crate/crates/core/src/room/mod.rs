//! Shoebox room acoustics: image-source impulse responses, decay analysis,
//! reverberant rendering and noise mixing.

mod image;
mod mix;
mod rt60;

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use image::{image_sources, simulate_rir, ImageSource, RirOptions, CUTOFF_DB, KERNEL_TAPS};
pub use mix::{convolve_rir, mix_at_snr};
pub use rt60::{energy_decay_db, rt60_schroeder};

/// Minimum distance between a pose and any wall, meters.
pub const WALL_MARGIN: f64 = 0.1;

/// Axis-aligned box room with frequency-independent wall absorption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShoeboxRoom {
    pub dims: [f64; 3],
    /// Absorption of the `-x, +x, -y, +y, -z, +z` walls.
    pub absorption: [f64; 6],
    pub speed_of_sound: f64,
}

impl ShoeboxRoom {
    pub fn new(dims: [f64; 3], absorption: [f64; 6]) -> Result<Self> {
        let room = Self { dims, absorption, speed_of_sound: 343.0 };
        room.validate()?;
        Ok(room)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!("room dims {:?} must be positive", self.dims)));
        }
        if self.absorption.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidConfig(alloc::format!("absorption {:?} outside [0, 1]", self.absorption)));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(Error::InvalidConfig("speed of sound must be positive".into()));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    pub fn diagonal(&self) -> f64 {
        self.dims.iter().map(|d| d * d).sum::<f64>().sqrt()
    }

    /// Area of wall `w` in the `-x, +x, -y, +y, -z, +z` order.
    pub fn wall_area(&self, w: usize) -> f64 {
        let [lx, ly, lz] = self.dims;
        match w / 2 {
            0 => ly * lz,
            1 => lx * lz,
            _ => lx * ly,
        }
    }

    /// Sabine reverberation time `0.161 V / sum(alpha S)`.
    pub fn sabine_rt60(&self) -> f64 {
        let absorbing: f64 = (0..6).map(|w| self.absorption[w] * self.wall_area(w)).sum();
        0.161 * self.volume() / absorbing
    }

    pub fn contains(&self, p: &Pose, margin: f64) -> bool {
        p.position.iter().zip(&self.dims).all(|(x, l)| *x >= margin && *x <= l - margin)
    }

    pub fn check_pose(&self, p: &Pose) -> Result<()> {
        if self.contains(p, WALL_MARGIN) {
            Ok(())
        } else {
            let [x, y, z] = p.position;
            Err(Error::PoseOutOfBounds { x, y, z })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 3],
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { position: [x, y, z] }
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        dist(&self.position, &other.position)
    }
}

pub(crate) fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl ImpulseResponse {
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self { samples: self.samples.iter().map(|v| v * gain).collect(), sample_rate: self.sample_rate }
    }

    /// Index of the largest absolute sample.
    pub fn peak_index(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.samples.iter().enumerate() {
            if v.abs() > self.samples[best].abs() {
                best = i;
            }
        }
        best
    }
}
