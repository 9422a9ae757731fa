//! Std companion of `vida-core`: file formats, dataset synthesis, training,
//! evaluation and the `vida` command line.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod gradcheck;
pub mod tensor_file;
pub mod train;
pub mod wav;

pub use config::PipelineConfig;
pub use error::{Result, VidaError};
