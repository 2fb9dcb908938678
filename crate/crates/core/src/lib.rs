//! Shape-prior quality estimation for volumetric segmentation masks.
//!
//! The crate predicts the Dice score of a segmentation without ground truth.
//! A variational autoencoder is trained on ground-truth masks; the Dice
//! between a predicted mask and its reconstruction ("fake Dice") is then
//! mapped to real Dice by a linear regressor fitted on jackknifed
//! predictions.
//!
//! Modules:
//!
//! - [`volume`], [`preprocess`], [`dice`]: mask types, resampling, cropping,
//!   augmentation and overlap measures.
//! - [`nn`]: the small 3D convolution toolkit the networks are built from.
//! - [`vae`]: the shape prior, its loss and training loop, shape features.
//! - [`regress`]: jackknife sample collection, linear fit, quality
//!   prediction, and the direct-regression baseline.
//! - [`synth`]: synthetic shapes, corruption operators and the corruption
//!   oracle segmenter.
//! - [`metrics`]: MAE, residual STD, Pearson and Spearman.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled.
#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_op_in_unsafe_fn)]

extern crate alloc;

pub mod dice;
mod error;
pub mod metrics;
pub mod nn;
pub mod preprocess;
pub mod regress;
pub mod rng;
pub mod synth;
pub mod vae;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{SoftMask, VolumetricMask};
