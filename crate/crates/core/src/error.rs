use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("input too short: need {needed} samples, got {got}")]
    InputTooShort { needed: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("empty spectrogram")]
    EmptySpectrogram,
    #[error("invalid magnitude: entry {index} is {value}")]
    InvalidMagnitude { index: usize, value: f64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("pose out of bounds: ({x}, {y}, {z})")]
    PoseOutOfBounds { x: f64, y: f64, z: f64 },
    #[error("decay range too small")]
    DecayRangeTooSmall,
    #[error("rate mismatch: {left} Hz vs {right} Hz")]
    RateMismatch { left: u32, right: u32 },
    #[error("noise has zero power")]
    SilentNoise,
    #[error("signal has zero power")]
    SilentSignal,
    #[error("noise shorter than signal: {noise} < {signal} samples")]
    NoiseTooShort { noise: usize, signal: usize },
    #[error("sampler exhausted after {0} draws")]
    SamplerExhausted(usize),
    #[error("segment mismatch: {0}")]
    SegmentMismatch(String),
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
    #[error("non-finite loss at step {0}")]
    NonFiniteLoss(u64),
    #[error("degenerate embedding")]
    DegenerateEmbedding,
    #[error("utterance too short for K={taps}, delta={delay}: {frames} frames")]
    UtteranceTooShort { frames: usize, taps: usize, delay: usize },
    #[error("no voiced frames")]
    NoVoicedFrames,
    #[error("resolution mismatch: expected {expected}, got {got}")]
    ResolutionMismatch { expected: String, got: String },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    /// True for errors caused by numerics rather than by malformed inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFiniteGradient(_) | Error::NonFiniteLoss(_))
    }
}
