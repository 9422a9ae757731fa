//! Allocation-only core of a visually-informed speech dereverberation pipeline.
//!
//! Everything here is a pure function of its inputs: STFT analysis and
//! synthesis, image-source room simulation, panorama rendering of the
//! simulated room, dataset sample synthesis, a small reverse-mode layer
//! library with an Adam optimizer, the conditioned UNet dereverberator and its
//! losses, a WPE baseline, and objective metrics. File formats, the training
//! driver and the command line live in the `vida` crate.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod fft;
pub mod forge;
pub mod metrics;
pub mod net;
pub mod real;
pub mod room;
pub mod signal;
pub mod tensor;
pub mod view;
pub mod wpe;

pub use error::{Error, Result};
pub use real::Real;

/// Sample rate of every clip that flows through the pipeline.
pub const PIPELINE_RATE: u32 = 16_000;
