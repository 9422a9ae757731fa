use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::room::{convolve_rir, mix_at_snr, rt60_schroeder, simulate_rir, ImpulseResponse, Pose, RirOptions, ShoeboxRoom, WALL_MARGIN};
use crate::signal::AudioClip;
use crate::view::{render_panorama, Panorama, ViewConfig};
use crate::{Error, Result};

/// Shortest clean clip accepted, in seconds.
pub const MIN_CLIP_SECONDS: f64 = 2.56;
/// Rejection draws before the sampler gives up.
pub const MAX_DRAWS: usize = 100;
/// Peak of every normalized reverberant clip.
pub const TARGET_PEAK: f64 = 0.95;

/// Ranges a room is drawn from; sampling picks a family uniformly first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomFamily {
    pub dims_min: [f64; 3],
    pub dims_max: [f64; 3],
    /// Per wall, in the order -x, +x, -y, +y, -z, +z.
    pub absorption_min: [f64; 6],
    pub absorption_max: [f64; 6],
}

impl Default for RoomFamily {
    fn default() -> Self {
        Self { dims_min: [3.0, 3.0, 2.4], dims_max: [8.0, 6.0, 3.5], absorption_min: [0.05; 6], absorption_max: [0.6; 6] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSamplerConfig {
    pub families: Vec<RoomFamily>,
    pub distance_min: f64,
    pub distance_max: f64,
    pub train_samples: usize,
    pub val_samples: usize,
    pub test_samples: usize,
    pub rng_seed: u64,
    pub max_order: usize,
    /// Directory of noise WAV files; mixing needs `snr_db` too.
    pub noise_corpus: Option<String>,
    pub snr_db: Option<f64>,
    /// Length of synthesized clean clips.
    pub clip_seconds: f64,
}

impl Default for SceneSamplerConfig {
    fn default() -> Self {
        Self {
            families: alloc::vec![RoomFamily::default()],
            distance_min: 0.5,
            distance_max: 4.0,
            train_samples: 64,
            val_samples: 8,
            test_samples: 16,
            rng_seed: 0,
            max_order: 30,
            noise_corpus: None,
            snr_db: None,
            clip_seconds: MIN_CLIP_SECONDS,
        }
    }
}

impl SceneSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(alloc::format!("sampler: {msg}")));
        if self.families.is_empty() {
            return bad("no room families".into());
        }
        for f in &self.families {
            for d in 0..3 {
                if !(f.dims_min[d] > 2.0 * WALL_MARGIN && f.dims_min[d] <= f.dims_max[d]) {
                    return bad(alloc::format!("room dims range {:?}..{:?} is empty or too small", f.dims_min, f.dims_max));
                }
            }
            for w in 0..6 {
                let (lo, hi) = (f.absorption_min[w], f.absorption_max[w]);
                if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                    return bad(alloc::format!("absorption range {lo}..{hi} for wall {w}"));
                }
            }
        }
        if !(self.distance_min >= 0.3 && self.distance_min <= self.distance_max) {
            return bad(alloc::format!("distance range {}..{} (minimum 0.3 m)", self.distance_min, self.distance_max));
        }
        if !(self.clip_seconds >= MIN_CLIP_SECONDS) {
            return bad(alloc::format!("clip_seconds below {MIN_CLIP_SECONDS}"));
        }
        Ok(())
    }

    pub fn split_size(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_samples,
            Split::Val => self.val_samples,
            Split::Test => self.test_samples,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// The generator owned by one sample: a ChaCha stream keyed by split and
/// index, so samples are independent of build order and splits never share
/// draws.
pub fn sample_rng(master_seed: u64, split: Split, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((split as u64) << 48) | index as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub room: ShoeboxRoom,
    pub src: Pose,
    pub mic: Pose,
}

/// Draw a room and a listener/speaker pair at a distance in range. The
/// speaker sits within 30 degrees of the listener's horizon.
pub fn draw_scene<R: Rng>(cfg: &SceneSamplerConfig, rng: &mut R) -> Result<Scene> {
    cfg.validate()?;
    for _ in 0..MAX_DRAWS {
        let fam = &cfg.families[rng.gen_range(0..cfg.families.len())];
        let dims: [f64; 3] = core::array::from_fn(|d| uniform(rng, fam.dims_min[d], fam.dims_max[d]));
        let absorption: [f64; 6] = core::array::from_fn(|w| uniform(rng, fam.absorption_min[w], fam.absorption_max[w]));
        let room = ShoeboxRoom::new(dims, absorption)?;
        let mic = Pose { position: core::array::from_fn(|d| uniform(rng, WALL_MARGIN, dims[d] - WALL_MARGIN)) };
        let distance = uniform(rng, cfg.distance_min, cfg.distance_max);
        let azimuth = rng.gen_range(0.0..2.0 * PI);
        let elevation = rng.gen_range(-PI / 6.0..PI / 6.0);
        let dir = [elevation.cos() * azimuth.cos(), elevation.cos() * azimuth.sin(), elevation.sin()];
        let src = Pose { position: core::array::from_fn(|d| mic.position[d] + distance * dir[d]) };
        if room.contains(&src, WALL_MARGIN) && room.contains(&mic, WALL_MARGIN) {
            return Ok(Scene { room, src, mic });
        }
    }
    Err(Error::SamplerExhausted(MAX_DRAWS))
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub id: String,
    pub split: Split,
    pub index: usize,
    pub room: ShoeboxRoom,
    pub src: Pose,
    pub mic: Pose,
    pub distance: f64,
    /// Absent when the impulse response has too little decay to measure.
    pub rt60: Option<f64>,
    /// Factor applied to both clips to bring the reverberant peak to 0.95.
    pub gain: f64,
    /// Direct-path amplitude `1 / (4 pi d)` divided out of the impulse response.
    pub direct_gain: f64,
    pub rng_seed: u64,
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltSample {
    pub clean: AudioClip,
    pub reverb: AudioClip,
    /// Impulse response scaled to a unit direct path.
    pub rir: ImpulseResponse,
    pub panorama: Panorama,
    pub meta: SampleMeta,
}

/// Simulate one scene and render its audio pair and panorama.
///
/// The impulse response is scaled to a unit direct path before convolving,
/// and the clean clip is zero-padded to the reverberant length; both are
/// then multiplied by the gain that peaks the reverberant clip at 0.95.
pub fn build_sample(
    clean: &AudioClip,
    cfg: &SceneSamplerConfig,
    view: &ViewConfig,
    noise: Option<&AudioClip>,
    split: Split,
    index: usize,
) -> Result<BuiltSample> {
    let needed = (MIN_CLIP_SECONDS * clean.sample_rate as f64).round() as usize;
    if clean.sample_rate != crate::PIPELINE_RATE {
        return Err(Error::RateMismatch { left: clean.sample_rate, right: crate::PIPELINE_RATE });
    }
    if clean.len() < needed {
        return Err(Error::InputTooShort { needed, got: clean.len() });
    }
    let mut rng = sample_rng(cfg.rng_seed, split, index);
    let scene = draw_scene(cfg, &mut rng)?;
    let distance = scene.src.distance(&scene.mic);
    let direct_gain = 1.0 / (4.0 * PI * distance);
    let rir = simulate_rir(&scene.room, &scene.src, &scene.mic, RirOptions { max_order: cfg.max_order, sample_rate: clean.sample_rate })?
        .scaled(1.0 / direct_gain);
    let rt60 = rt60_schroeder(&rir).ok();
    let panorama = render_panorama(&scene.room, &scene.mic, &scene.src, view)?;

    let wet = convolve_rir(clean, &rir)?;
    let dry = clean.fit_to(wet.len());
    let peak = wet.peak().max(dry.peak());
    if !(peak > 0.0) {
        return Err(Error::SilentSignal);
    }
    let gain = TARGET_PEAK / peak;
    let mut reverb = wet.scaled(gain);
    let clean = dry.scaled(gain);
    let snr_db = match (noise, cfg.snr_db) {
        (Some(n), Some(snr)) => {
            reverb = mix_at_snr(&reverb, n, snr, rng.gen())?;
            Some(snr)
        }
        _ => None,
    };
    let meta = SampleMeta {
        id: alloc::format!("sample_{index:05}"),
        split,
        index,
        room: scene.room,
        src: scene.src,
        mic: scene.mic,
        distance,
        rt60,
        gain,
        direct_gain,
        rng_seed: cfg.rng_seed,
        snr_db,
    };
    Ok(BuiltSample { clean, reverb, rir, panorama, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::synthetic_speech;

    fn clip(seed: u64) -> AudioClip {
        synthetic_speech(&mut ChaCha8Rng::seed_from_u64(seed), MIN_CLIP_SECONDS, 16_000)
    }

    fn small_rooms() -> SceneSamplerConfig {
        SceneSamplerConfig {
            families: alloc::vec![RoomFamily {
                dims_min: [3.0, 3.0, 2.5],
                dims_max: [4.0, 4.0, 3.0],
                absorption_min: [0.4; 6],
                absorption_max: [0.7; 6],
            }],
            distance_min: 0.5,
            distance_max: 2.0,
            max_order: 8,
            ..SceneSamplerConfig::default()
        }
    }

    #[test]
    fn same_seed_same_sample() {
        let cfg = small_rooms();
        let a = build_sample(&clip(1), &cfg, &ViewConfig::default(), None, Split::Train, 3).unwrap();
        let b = build_sample(&clip(1), &cfg, &ViewConfig::default(), None, Split::Train, 3).unwrap();
        assert_eq!(a, b);
        let c = build_sample(&clip(1), &cfg, &ViewConfig::default(), None, Split::Test, 3).unwrap();
        assert_ne!(a.meta.room, c.meta.room);
    }

    #[test]
    fn meta_distance_matches_poses() {
        let s = build_sample(&clip(2), &small_rooms(), &ViewConfig::default(), None, Split::Val, 0).unwrap();
        let d = ((0..3).map(|k| (s.meta.src.position[k] - s.meta.mic.position[k]).powi(2)).sum::<f64>()).sqrt();
        assert!((s.meta.distance - d).abs() < 1e-9);
        assert!(s.meta.distance >= 0.5 && s.meta.distance <= 2.0);
        assert!((s.reverb.peak() - TARGET_PEAK).abs() < 1e-12);
        assert!(s.clean.peak() <= TARGET_PEAK + 1e-12);
        assert_eq!(s.clean.len(), s.reverb.len());
        let rt = s.meta.rt60.unwrap();
        assert!((rt - rt60_schroeder(&s.rir).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn anechoic_room_delays_and_scales() {
        let mut cfg = small_rooms();
        cfg.families[0].absorption_min = [1.0; 6];
        cfg.families[0].absorption_max = [1.0; 6];
        let clean = clip(4);
        let s = build_sample(&clean, &cfg, &ViewConfig::default(), None, Split::Train, 1).unwrap();
        assert_eq!(s.meta.rt60, None);
        // Independent rendering of a unit arrival at tau = fs d / c through
        // an 81-tap Hann-windowed sinc.
        let tau = 16_000.0 * s.meta.distance / 343.0;
        let center = tau.round() as i64;
        let mut expected = alloc::vec![0.0; s.reverb.len()];
        for n in center - 40..=center + 40 {
            if n < 0 {
                continue;
            }
            let t = n as f64 - tau;
            let h = 0.5 * (1.0 + (PI * t / 41.0).cos()) * if t == 0.0 { 1.0 } else { (PI * t).sin() / (PI * t) };
            for (i, &x) in clean.samples.iter().enumerate() {
                if let Some(e) = expected.get_mut(i + n as usize) {
                    *e += s.meta.gain * h * x;
                }
            }
        }
        let err = s.reverb.samples.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn short_clip_and_unsatisfiable_ranges_fail() {
        let short = AudioClip::zeros(16_000, 16_000);
        let err = build_sample(&short, &small_rooms(), &ViewConfig::default(), None, Split::Train, 0).unwrap_err();
        assert!(matches!(err, Error::InputTooShort { .. }));
        let mut cfg = small_rooms();
        cfg.distance_min = 30.0;
        cfg.distance_max = 40.0;
        assert_eq!(draw_scene(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err(), Error::SamplerExhausted(MAX_DRAWS));
        cfg.distance_min = 0.1;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn noise_is_mixed_at_the_requested_snr() {
        let mut cfg = small_rooms();
        cfg.snr_db = Some(20.0);
        let noise = AudioClip::new((0..200_000).map(|i| ((i * 7919) % 1009) as f64 / 1009.0 - 0.5).collect(), 16_000).unwrap();
        let quiet = build_sample(&clip(5), &cfg, &ViewConfig::default(), None, Split::Train, 2).unwrap();
        let noisy = build_sample(&clip(5), &cfg, &ViewConfig::default(), Some(&noise), Split::Train, 2).unwrap();
        assert_eq!(noisy.meta.snr_db, Some(20.0));
        let p_sig = quiet.reverb.power();
        let diff: f64 = noisy.reverb.samples.iter().zip(&quiet.reverb.samples).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p_sig.max(1e-300);
        let snr = 10.0 * (quiet.reverb.len() as f64 / diff).log10();
        assert!((snr - 20.0).abs() < 1e-6, "{snr}");
    }
}
