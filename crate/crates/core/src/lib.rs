//! Radar/camera fusion geometry and supervision math.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense row-major tensors, convolution, linear layers,
//!   activations, pooling, bilinear/trilinear sampling and the `LXLT`
//!   binary tensor format.
//! - [`geometry`]: pinhole projection, rigid transforms, spherical radar
//!   coordinates and the radar angular position-error model.
//! - [`depth`]: radar-derived depth targets with RCS-guided neighborhood
//!   radii, the one-to-many depth loss and its analytic gradient.
//! - [`view_transform`]: radar occupancy grids, intrinsics-embedded depth
//!   distributions and the occupancy/depth gated sampling view transform.
//! - [`fusion`]: concatenation fusion and channel + spatial attention fusion.
//! - [`sim`]: synthetic scenes, a radar angular-noise model and supervision
//!   quality experiments.
//! - [`cli`]: the `radcam` command-line front end.
//!
//! Axis convention, used everywhere: camera frame x right, y down, z forward
//! (z is depth). Pixel `(row i, col j)` has its center at continuous image
//! coordinate `(u = j, v = i)`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod depth;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod sim;
pub mod tensor;
pub mod view_transform;

pub use error::{Error, Result};
pub use tensor::Tensor;
