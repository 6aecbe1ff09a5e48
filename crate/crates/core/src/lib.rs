//! Tamper localization for 3D Gaussian splatting scenes.
//!
//! A per-Gaussian tampering attribute is seeded by multi-view mask voting,
//! refined by a cyclic 2D/3D optimization, rendered back to per-view masks
//! and scored against ground truth. All pipelines are deterministic: given
//! identical inputs, configuration and seeds the results are bit-identical,
//! independent of thread count and of the `parallel` feature.

pub mod camera;
pub mod contrastive;
pub mod error;
pub mod eval;
pub mod exec;
pub mod image_io;
pub mod optim;
pub mod ply;
pub mod render;
pub mod scene;
pub mod synth;
pub mod vote;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
