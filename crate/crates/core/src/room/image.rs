use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use super::{dist, ImpulseResponse, Pose, ShoeboxRoom};
use crate::Result;

/// Length of the windowed-sinc fractional delay kernel.
pub const KERNEL_TAPS: usize = 81;
/// Images quieter than this, relative to the direct path, are discarded.
pub const CUTOFF_DB: f64 = -60.0;

const HALF_TAPS: i64 = (KERNEL_TAPS as i64 - 1) / 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RirOptions {
    pub max_order: usize,
    pub sample_rate: u32,
}

impl Default for RirOptions {
    fn default() -> Self {
        Self { max_order: 30, sample_rate: crate::PIPELINE_RATE }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource {
    pub position: [f64; 3],
    /// Total number of wall reflections.
    pub order: usize,
    /// Product of wall reflection coefficients `sqrt(1 - alpha)`.
    pub reflection_gain: f64,
}

/// Every mirror image of `src` with at most `max_order` reflections.
pub fn image_sources(room: &ShoeboxRoom, src: &Pose, max_order: usize) -> Vec<ImageSource> {
    let beta: Vec<f64> = room.absorption.iter().map(|a| (1.0 - a).sqrt()).collect();
    // Per axis: (coordinate, reflections, gain) for the image index pairs
    // (n, q): coordinate 2nL + (1 - 2q)s hits the low wall |n - q| times and
    // the high wall |n| times.
    let axes: Vec<Vec<(f64, usize, f64)>> = (0..3)
        .map(|d| {
            let l = room.dims[d];
            let s = src.position[d];
            let reach = max_order as i64 / 2 + 1;
            let mut out = Vec::new();
            for n in -reach..=reach {
                for q in 0..2i64 {
                    let low = (n - q).unsigned_abs() as usize;
                    let high = n.unsigned_abs() as usize;
                    if low + high > max_order {
                        continue;
                    }
                    let coord = 2.0 * n as f64 * l + (1 - 2 * q) as f64 * s;
                    let gain = beta[2 * d].powi(low as i32) * beta[2 * d + 1].powi(high as i32);
                    out.push((coord, low + high, gain));
                }
            }
            out
        })
        .collect();
    let mut images = Vec::new();
    for &(x, ox, gx) in &axes[0] {
        for &(y, oy, gy) in &axes[1] {
            if ox + oy > max_order {
                continue;
            }
            for &(z, oz, gz) in &axes[2] {
                let order = ox + oy + oz;
                if order <= max_order {
                    images.push(ImageSource { position: [x, y, z], order, reflection_gain: gx * gy * gz });
                }
            }
        }
    }
    images
}

/// Image-source impulse response from `src` to `mic`.
///
/// Each image contributes `gain / (4 pi d)` at delay `d / c`, spread over an
/// 81-tap Hann-windowed sinc. Taps that would land before time zero are
/// dropped.
pub fn simulate_rir(room: &ShoeboxRoom, src: &Pose, mic: &Pose, opts: RirOptions) -> Result<ImpulseResponse> {
    room.validate()?;
    room.check_pose(src)?;
    room.check_pose(mic)?;
    let fs = opts.sample_rate as f64;
    let direct = src.distance(mic);
    let direct_amp = 1.0 / (4.0 * PI * direct);
    let cutoff = direct_amp * 10f64.powf(CUTOFF_DB / 20.0);

    let mut arrivals: Vec<(f64, f64)> = image_sources(room, src, opts.max_order)
        .into_iter()
        .filter_map(|img| {
            let d = dist(&img.position, &mic.position);
            let amp = img.reflection_gain / (4.0 * PI * d);
            (amp >= cutoff && amp > 0.0).then_some((fs * d / room.speed_of_sound, amp))
        })
        .collect();
    // Summation order fixed by delay so the output does not depend on
    // enumeration order.
    arrivals.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));

    let last = arrivals.iter().map(|(t, _)| t.round() as i64).max().unwrap_or(0);
    let len = (last + HALF_TAPS + 1).max(1) as usize;
    let mut samples = vec![0.0; len];
    for (tau, amp) in arrivals {
        add_fractional_impulse(&mut samples, tau, amp);
    }
    Ok(ImpulseResponse { samples, sample_rate: opts.sample_rate })
}

fn add_fractional_impulse(out: &mut [f64], tau: f64, amp: f64) {
    let center = tau.round() as i64;
    for n in (center - HALF_TAPS)..=(center + HALF_TAPS) {
        if n < 0 || n as usize >= out.len() {
            continue;
        }
        let t = n as f64 - tau;
        let window = 0.5 * (1.0 + (PI * t / (HALF_TAPS as f64 + 1.0)).cos());
        out[n as usize] += amp * window * sinc(t);
    }
}

fn sinc(t: f64) -> f64 {
    if t.abs() < 1e-12 {
        1.0
    } else {
        (PI * t).sin() / (PI * t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use std::collections::BTreeMap;

    fn room() -> ShoeboxRoom {
        ShoeboxRoom::new([4.0, 3.0, 2.5], [0.3, 0.4, 0.2, 0.5, 0.6, 0.1]).unwrap()
    }

    /// Mirror sequences across walls, independent of the index arithmetic.
    fn brute_force_images(room: &ShoeboxRoom, src: [f64; 3], max_order: usize) -> BTreeMap<[i64; 3], usize> {
        let key = |p: [f64; 3]| p.map(|v| (v * 1e6).round() as i64);
        let mut found = BTreeMap::new();
        let mut frontier = vec![(src, usize::MAX)];
        found.insert(key(src), 0);
        for order in 1..=max_order {
            let mut next = Vec::new();
            for (p, last_wall) in frontier {
                for wall in 0..6 {
                    if wall == last_wall {
                        continue;
                    }
                    let axis = wall / 2;
                    let plane = if wall % 2 == 0 { 0.0 } else { room.dims[axis] };
                    let mut q = p;
                    q[axis] = 2.0 * plane - p[axis];
                    found.entry(key(q)).or_insert(order);
                    next.push((q, wall));
                }
            }
            frontier = next;
        }
        found
    }

    #[test]
    fn image_set_matches_brute_force() {
        let r = room();
        let src = [1.0, 1.2, 0.7];
        for max_order in 0..=2 {
            let ours: BTreeMap<[i64; 3], usize> = image_sources(&r, &Pose { position: src }, max_order)
                .into_iter()
                .map(|i| (i.position.map(|v| (v * 1e6).round() as i64), i.order))
                .collect();
            assert_eq!(ours, brute_force_images(&r, src, max_order), "order {max_order}");
        }
        assert_eq!(image_sources(&r, &Pose { position: src }, 1).len(), 7);
        assert_eq!(image_sources(&r, &Pose { position: src }, 2).len(), 25);
    }

    #[test]
    fn anechoic_single_arrival() {
        let r = ShoeboxRoom::new([4.0, 3.0, 2.5], [1.0; 6]).unwrap();
        let src = Pose::new(1.0, 1.0, 1.5);
        let mic = Pose::new(3.0, 2.0, 1.5);
        let rir = simulate_rir(&r, &src, &mic, RirOptions::default()).unwrap();
        let expected = (16_000.0 * 5f64.sqrt() / 343.0).round() as i64;
        assert_eq!(expected, 104);
        assert!((rir.peak_index() as i64 - expected).abs() <= 1);
        let order0 = simulate_rir(&room(), &src, &mic, RirOptions { max_order: 0, ..Default::default() }).unwrap();
        assert_eq!(order0, rir);
    }

    #[test]
    fn deterministic_and_absorption_monotone() {
        let src = Pose::new(1.0, 1.0, 1.5);
        let mic = Pose::new(3.0, 2.0, 1.2);
        let opts = RirOptions { max_order: 12, ..Default::default() };
        let a = simulate_rir(&room(), &src, &mic, opts).unwrap();
        let b = simulate_rir(&room(), &src, &mic, opts).unwrap();
        assert_eq!(a.samples.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.samples.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        for wall in 0..6 {
            let mut r = room();
            r.absorption[wall] += 0.2;
            let e = simulate_rir(&r, &src, &mic, opts).unwrap().energy();
            assert!(e < a.energy(), "wall {wall}");
        }
    }

    #[test]
    fn pose_outside_is_rejected() {
        let err = simulate_rir(&room(), &Pose::new(0.05, 1.0, 1.0), &Pose::new(2.0, 2.0, 1.0), RirOptions::default());
        assert!(matches!(err, Err(Error::PoseOutOfBounds { .. })));
    }
}
