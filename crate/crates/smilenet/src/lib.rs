//! File formats, command line and multi-threaded model selection for
//! `smilenet-core`.

pub mod annotations;
pub mod binio;
pub mod checkpoint;
pub mod cli;
pub mod clock;
pub mod dataset_io;
pub mod error;
pub mod parallel;
pub mod pgm;
pub mod report;
pub mod tensor_io;

pub use error::{Error, Result};
