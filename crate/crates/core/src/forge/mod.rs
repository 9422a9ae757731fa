//! Dataset synthesis and the segmentation shared by training and inference.

mod scene;
mod segment;
mod speech;

pub use scene::{
    build_sample, draw_scene, sample_rng, BuiltSample, RoomFamily, SampleMeta, Scene, SceneSamplerConfig, Split, MAX_DRAWS,
    MIN_CLIP_SECONDS, TARGET_PEAK,
};
pub use segment::{segment_count, segment_spectrogram, stitch_segments, Segment, SegmentSet};
pub use speech::synthetic_speech;
