//! Rotation-invariant point-cloud representation built on centrifugal
//! reference frames.
//!
//! Layout:
//! - [`geom`]: vectors, rotation matrices, Haar-uniform rotation sampling.
//! - [`cloud`]: the point cloud container shared by every other module.
//! - [`frames`]: polar and composed centrifugal frames, normal estimation,
//!   factorization of rotations through polar frames.
//! - [`distribution`]: Gaussian mixture over the points and the induced
//!   distribution over rotations.
//! - [`sampling`]: distances, farthest-point sampling, k-NN grouping,
//!   Chamfer distance, attention sampling and the relation module.
//! - [`estimation`]: anchor-based rotation estimation, Average Distance,
//!   Kabsch and rotation-only ICP.
//! - [`io`]: OFF / PLY / XYZ readers and writers, mesh surface sampling,
//!   unit-sphere normalization.
//! - [`verify`]: the invariance suite behind `centrifugal verify`.
//! - [`cli`]: command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cloud;
pub mod distribution;
pub mod error;
pub mod estimation;
pub mod frames;
pub mod geom;
pub mod io;
pub mod sampling;
pub mod verify;

pub use cloud::PointCloud;
pub use error::{Error, Result};
pub use frames::{Frame, FrameKind};
pub use geom::{RotationMatrix, Vec3};

/// Default guard for every singularity test (origin queries, polar axis,
/// radial normals, eigenvalue gaps).
pub const DEFAULT_EPS: f64 = 1e-8;

/// Default neighborhood size for normal estimation.
pub const DEFAULT_K: usize = 16;
