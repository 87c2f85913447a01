//! Bit-exact serialization: splat PLY checkpoints, grayscale PFM maps,
//! camera JSON, raw float32 tensors, and 8-bit PNG.

pub mod cameras;
pub mod pfm;
pub mod ply;
pub mod png;
pub mod tensor;

pub use cameras::{cameras_json, read_cameras, write_cameras};
pub use pfm::{read_pfm, write_pfm};
pub use ply::{read_ply, read_point_cloud, write_ply, ColoredPointCloud};
pub use png::{read_rgb_png, write_rgb_png};
pub use tensor::{read_f32, read_f32_expected, write_f32};
