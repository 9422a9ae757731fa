use alloc::vec::Vec;

use crate::signal::LogMagPhase;
use crate::{Error, Result};

/// One fixed-length window of a spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub data: LogMagPhase,
    /// Set when the window runs past the end and was filled with silence.
    pub padded: bool,
}

/// Matched windows of a reverberant spectrogram and its clean target.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    pub reverb: Vec<Segment>,
    pub clean: Vec<Segment>,
    pub window: usize,
    pub hop: usize,
}

impl SegmentSet {
    /// The clean spectrogram is fitted to the reverberant frame count first.
    pub fn new(reverb: &LogMagPhase, clean: &LogMagPhase, window: usize) -> Result<Self> {
        let hop = window / 2;
        let clean = clean.fit_frames(reverb.frames);
        Ok(Self {
            reverb: segment_spectrogram(reverb, window, hop)?,
            clean: segment_spectrogram(&clean, window, hop)?,
            window,
            hop,
        })
    }

    pub fn len(&self) -> usize {
        self.reverb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reverb.is_empty()
    }
}

pub fn segment_count(frames: usize, window: usize, hop: usize) -> usize {
    frames.saturating_sub(window).div_ceil(hop) + 1
}

fn check_framing(window: usize, hop: usize) -> Result<()> {
    if window == 0 || window % 2 != 0 || hop != window / 2 {
        return Err(Error::InvalidConfig(alloc::format!("segment window {window} with hop {hop}: window must be even and hop half of it")));
    }
    Ok(())
}

/// Windows starting at `0, hop, 2 hop, ...`; the last one is padded with
/// silence up to full length when it runs past the end.
pub fn segment_spectrogram(spec: &LogMagPhase, window: usize, hop: usize) -> Result<Vec<Segment>> {
    check_framing(window, hop)?;
    if spec.frames == 0 {
        return Err(Error::EmptySpectrogram);
    }
    Ok((0..segment_count(spec.frames, window, hop))
        .map(|s| {
            let start = s * hop;
            Segment { start, data: spec.slice_frames(start, window), padded: start + window > spec.frames }
        })
        .collect())
}

/// Reassemble `original_frames` frames, taking each from the middle half of
/// the window that centres it. The first window also supplies the leading
/// quarter and the last window everything after its middle.
pub fn stitch_segments(segments: &[LogMagPhase], window: usize, original_frames: usize) -> Result<LogMagPhase> {
    let hop = window / 2;
    check_framing(window, hop)?;
    let Some(first) = segments.first() else {
        return Err(Error::SegmentMismatch("no segments".into()));
    };
    if original_frames == 0 || segments.len() != segment_count(original_frames, window, hop) {
        return Err(Error::SegmentMismatch(alloc::format!(
            "{} segments cannot cover {original_frames} frames with window {window}",
            segments.len()
        )));
    }
    let bins = first.bins;
    if let Some(bad) = segments.iter().find(|s| s.frames != window || s.bins != bins) {
        return Err(Error::SegmentMismatch(alloc::format!("segment is {}x{}, expected {window}x{bins}", bad.frames, bad.bins)));
    }
    let mut out = LogMagPhase::silent(original_frames, bins);
    let last = segments.len() - 1;
    for (s, seg) in segments.iter().enumerate() {
        let start = s * hop;
        let lo = if s == 0 { 0 } else { start + window / 4 };
        let hi = if s == last { original_frames } else { (start + 3 * window / 4).min(original_frames) };
        for t in lo..hi {
            let (dst, src) = (t * bins, (t - start) * bins);
            out.mag[dst..dst + bins].copy_from_slice(&seg.mag[src..src + bins]);
            out.phase[dst..dst + bins].copy_from_slice(&seg.phase[src..src + bins]);
        }
    }
    Ok(out)
}
