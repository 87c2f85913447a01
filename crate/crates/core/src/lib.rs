//! Sparse-view Gaussian-splatting toolkit.
//!
//! A CPU reference implementation of the geometric and optimization core of
//! confidence-guided sparse-view reconstruction: a tile-based rasterizer that
//! reports per-pixel transmittance, contributor counts, and a confidence
//! measure; analytic gradients through the renderer for both Gaussian
//! attributes and camera pose; Plücker/Fourier camera embeddings; elliptical
//! novel-view trajectories; a refine-in-the-loop optimizer with adaptive
//! density control; and bit-exact interchange formats.

pub mod camera;
pub mod cli;
pub mod dataset;
pub mod embed;
pub mod error;
pub mod image;
pub mod io;
pub mod losses;
pub mod manifest;
pub mod metrics;
pub mod optim;
pub mod refine;
pub mod render;
pub mod rng;
pub mod scene;
pub mod sh;
pub mod synth;
pub mod trajectory;

pub use error::{Error, Result};
