//! Convolutional network training from first principles, plus the dataset
//! subsetting rules and action-unit statistics used for smile detection
//! experiments.
//!
//! The crate is `no_std` and only needs `alloc`. Anything that touches the
//! filesystem, wall clocks or threads lives in the `smilenet` companion crate.
//!
//! - [`tensor`]: dense row-major `f64` arrays and seeded initialization.
//! - [`nn`]: layers, network construction, forward and backward passes.
//! - [`optim`]: loss, accuracy, gradient descent, momentum SGD, training loop
//!   and the finite-difference gradient check.
//! - [`data`]: samples, datasets, splits, subsets, cropping, resizing and the
//!   synthetic face generator.
//! - [`stats`]: per action-unit frame counts and intensity histograms.
//! - [`modelsel`]: one-factor-at-a-time model selection and repeatability.
#![no_std]

extern crate alloc;

pub mod data;
pub mod error;
pub mod modelsel;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::{derive_seed, seeded, Rng};
pub use tensor::Tensor;
