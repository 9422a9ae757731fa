use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::ImpulseResponse;
use crate::{Error, Result};

const FIT_START_DB: f64 = -5.0;
const FIT_END_DB: f64 = -25.0;
const REQUIRED_DECAY_DB: f64 = -30.0;
const MIN_FIT_POINTS: usize = 8;

/// Backward-integrated energy decay curve in dB relative to total energy.
/// Entries after the last nonzero sample are `-inf`.
pub fn energy_decay_db(rir: &ImpulseResponse) -> Vec<f64> {
    let mut tail = 0.0;
    let mut edc: Vec<f64> = rir
        .samples
        .iter()
        .rev()
        .map(|v| {
            tail += v * v;
            tail
        })
        .collect();
    edc.reverse();
    let total = edc.first().copied().unwrap_or(0.0);
    edc.iter().map(|e| if total > 0.0 { 10.0 * (e / total).log10() } else { f64::NEG_INFINITY }).collect()
}

/// Schroeder RT60: least-squares line through the -5..-25 dB span of the
/// decay curve, extrapolated to -60 dB.
pub fn rt60_schroeder(rir: &ImpulseResponse) -> Result<f64> {
    let edc = energy_decay_db(rir);
    let reaches = edc.iter().any(|&d| d <= REQUIRED_DECAY_DB);
    let start = edc.iter().position(|&d| d <= FIT_START_DB);
    let end = edc.iter().position(|&d| d <= FIT_END_DB);
    let (Some(start), Some(end), true) = (start, end, reaches) else {
        return Err(Error::DecayRangeTooSmall);
    };
    if end < start + MIN_FIT_POINTS {
        return Err(Error::DecayRangeTooSmall);
    }
    let fs = rir.sample_rate as f64;
    let n = (end - start + 1) as f64;
    let (mut st, mut sy) = (0.0, 0.0);
    for (i, &y) in edc.iter().enumerate().take(end + 1).skip(start) {
        st += i as f64 / fs;
        sy += y;
    }
    let (mt, my) = (st / n, sy / n);
    let (mut cov, mut var) = (0.0, 0.0);
    for (i, &y) in edc.iter().enumerate().take(end + 1).skip(start) {
        let dt = i as f64 / fs - mt;
        cov += dt * (y - my);
        var += dt * dt;
    }
    let slope = cov / var;
    if !(slope < 0.0) {
        return Err(Error::DecayRangeTooSmall);
    }
    Ok(-60.0 / slope)
}
