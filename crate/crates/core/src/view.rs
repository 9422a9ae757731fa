//! Equirectangular observations of a shoebox room from the listener.
//!
//! Column `j` of a `W`-wide panorama looks along azimuth `j * 360 / W - 180`
//! degrees (azimuth 0 is `+x`, 90 is `+y`); row `i` of an `H`-high panorama
//! looks at elevation `60 - i * 120 / H` degrees.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::room::{Pose, ShoeboxRoom};
use crate::Result;

pub const CHANNEL_NAMES: [&str; 3] = ["depth", "albedo", "speaker_mask"];

const ELEVATION_SPAN: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViewConfig {
    pub width: usize,
    pub height: usize,
    pub fov_degrees: f64,
    pub speaker_radius: f64,
}

impl Default for ViewConfig {
    fn default() -> Self {
        Self { width: 252, height: 64, fov_degrees: 80.0, speaker_radius: 0.25 }
    }
}

impl ViewConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(crate::Error::InvalidConfig("view: empty resolution".into()));
        }
        if !(self.fov_degrees > 0.0 && self.fov_degrees <= 360.0) {
            return Err(crate::Error::InvalidConfig("view: fov must be in (0, 360]".into()));
        }
        if !(self.speaker_radius > 0.0) {
            return Err(crate::Error::InvalidConfig("view: speaker radius must be positive".into()));
        }
        Ok(())
    }
}

/// Three row-major `height x width` planes: depth in meters, albedo
/// (`1 - alpha` of the wall hit) and a binary speaker mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Panorama {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub albedo: Vec<f64>,
    pub speaker_mask: Vec<f64>,
}

impl Panorama {
    pub fn channels(&self) -> [&[f64]; 3] {
        [&self.depth, &self.albedo, &self.speaker_mask]
    }

    pub fn from_channels(width: usize, height: usize, channels: [Vec<f64>; 3]) -> Result<Self> {
        if channels.iter().any(|c| c.len() != width * height) {
            return Err(crate::Error::shape("panorama", alloc::format!("channels do not match {height}x{width}")));
        }
        let [depth, albedo, speaker_mask] = channels;
        Ok(Self { width, height, depth, albedo, speaker_mask })
    }

    pub fn mask_area(&self) -> usize {
        self.speaker_mask.iter().filter(|&&m| m != 0.0).count()
    }

    fn map_columns(&self, width: usize, source_col: impl Fn(usize) -> usize) -> Self {
        let remap = |plane: &[f64]| {
            let mut out = Vec::with_capacity(self.height * width);
            for row in 0..self.height {
                for col in 0..width {
                    out.push(plane[row * self.width + source_col(col)]);
                }
            }
            out
        };
        Self {
            width,
            height: self.height,
            depth: remap(&self.depth),
            albedo: remap(&self.albedo),
            speaker_mask: remap(&self.speaker_mask),
        }
    }
}

pub fn azimuth_of_column(col: usize, width: usize) -> f64 {
    col as f64 * 360.0 / width as f64 - 180.0
}

pub fn elevation_of_row(row: usize, height: usize) -> f64 {
    ELEVATION_SPAN / 2.0 - row as f64 * ELEVATION_SPAN / height as f64
}

fn column_shift(angle_degrees: f64, width: usize) -> i64 {
    (angle_degrees / 360.0 * width as f64).round() as i64
}

fn direction(azimuth_deg: f64, elevation_deg: f64) -> [f64; 3] {
    let (az, el) = (azimuth_deg * PI / 180.0, elevation_deg * PI / 180.0);
    [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]
}

pub fn render_panorama(room: &ShoeboxRoom, mic: &Pose, src: &Pose, cfg: &ViewConfig) -> Result<Panorama> {
    render_panorama_yawed(room, mic, src, cfg, 0.0)
}

/// Render with the listener turned so that the scene appears shifted right
/// by `yaw_degrees`; for column-aligned yaw this equals
/// `roll_panorama(render_panorama(..), yaw_degrees)`.
pub fn render_panorama_yawed(
    room: &ShoeboxRoom,
    mic: &Pose,
    src: &Pose,
    cfg: &ViewConfig,
    yaw_degrees: f64,
) -> Result<Panorama> {
    room.validate()?;
    cfg.validate()?;
    room.check_pose(mic)?;
    room.check_pose(src)?;
    let n = cfg.width * cfg.height;
    let mut depth = Vec::with_capacity(n);
    let mut albedo = Vec::with_capacity(n);
    let mut speaker_mask = Vec::with_capacity(n);
    let p = mic.position;
    let to_src = [src.position[0] - p[0], src.position[1] - p[1], src.position[2] - p[2]];
    let r2 = cfg.speaker_radius * cfg.speaker_radius;
    for row in 0..cfg.height {
        let el = elevation_of_row(row, cfg.height);
        for col in 0..cfg.width {
            let dir = direction(azimuth_of_column(col, cfg.width) - yaw_degrees, el);
            let (t_wall, wall) = first_wall_hit(room, &p, &dir);
            depth.push(t_wall);
            albedo.push(1.0 - room.absorption[wall]);
            let along: f64 = to_src.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let hit = along > 0.0 && along < t_wall && {
                let off2 = to_src.iter().map(|v| v * v).sum::<f64>() - along * along;
                off2 <= r2
            };
            speaker_mask.push(if hit { 1.0 } else { 0.0 });
        }
    }
    Ok(Panorama { width: cfg.width, height: cfg.height, depth, albedo, speaker_mask })
}

fn first_wall_hit(room: &ShoeboxRoom, p: &[f64; 3], dir: &[f64; 3]) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for axis in 0..3 {
        let d = dir[axis];
        let (t, wall) = if d > 1e-15 {
            ((room.dims[axis] - p[axis]) / d, 2 * axis + 1)
        } else if d < -1e-15 {
            (-p[axis] / d, 2 * axis)
        } else {
            continue;
        };
        if t < best.0 {
            best = (t, wall);
        }
    }
    best
}

/// Circular column shift by `round(angle / 360 * width)`: output column `j`
/// shows input column `j - shift`.
pub fn roll_panorama(img: &Panorama, angle_degrees: f64) -> Panorama {
    let w = img.width as i64;
    let shift = column_shift(angle_degrees, img.width).rem_euclid(w);
    img.map_columns(img.width, |col| (col as i64 - shift).rem_euclid(w) as usize)
}

/// Wrapping slice of `round(fov / 360 * width)` columns centred on the column
/// looking along `center_azimuth`.
pub fn crop_fov(img: &Panorama, center_azimuth: f64, fov_degrees: f64) -> Panorama {
    let w = img.width as i64;
    let n = ((fov_degrees / 360.0 * img.width as f64).round() as i64).clamp(1, w);
    let center = column_shift(center_azimuth + 180.0, img.width);
    let start = center - n / 2;
    img.map_columns(n as usize, |col| (start + col as i64).rem_euclid(w) as usize)
}

/// Same columns as `crop_fov`, kept in place at full width; every other column
/// reads zero in all channels.
pub fn restrict_fov(img: &Panorama, center_azimuth: f64, fov_degrees: f64) -> Panorama {
    let w = img.width as i64;
    let n = ((fov_degrees / 360.0 * img.width as f64).round() as i64).clamp(1, w);
    let start = column_shift(center_azimuth + 180.0, img.width) - n / 2;
    let mut out = img.clone();
    for col in 0..w {
        if (col - start).rem_euclid(w) < n {
            continue;
        }
        for row in 0..img.height {
            let i = row * img.width + col as usize;
            out.depth[i] = 0.0;
            out.albedo[i] = 0.0;
            out.speaker_mask[i] = 0.0;
        }
    }
    out
}

pub fn remove_speaker(img: &Panorama) -> Panorama {
    Panorama { speaker_mask: alloc::vec![0.0; img.speaker_mask.len()], ..img.clone() }
}
