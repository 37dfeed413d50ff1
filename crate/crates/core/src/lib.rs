//! Render-and-compare 6D pose refinement for cluttered multi-object scenes.
//!
//! Meshes annotated with per-vertex descriptors are rasterized into an
//! abstract descriptor image; a pixel-wise loss against an observed descriptor
//! image is back-propagated to every object pose through a screen-space
//! gradient approximation, and the poses are refined with AdaGrad.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correspondence;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod gradient;
pub mod harness;
pub mod image;
pub mod image_io;
mod kdtree;
pub mod mesh;
pub mod mesh_io;
pub mod metrics;
pub mod raster;
pub mod refine;
pub mod sampling;
pub mod scene;
pub mod scene_io;

pub use error::{Error, Result};
