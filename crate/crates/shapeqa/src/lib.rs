//! File formats, pipeline orchestration and the `shapeqa` command line for
//! estimating segmentation quality from a learned shape prior.
//!
//! The numerical core lives in [`shapeqa_core`]; this crate adds the std-only
//! pieces: VMSK masks, checkpoints, CSV/JSON artifacts and the CLI.

pub mod checkpoint;
pub mod cli;
pub mod config;
mod error;
pub mod files;
pub mod pipeline;
pub mod report;
pub mod vmsk;

pub use error::{Error, Result};
pub use shapeqa_core as core;
