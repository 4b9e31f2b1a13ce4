//! Direct feature-metric visual odometry.
//!
//! Estimates the relative pose between two views by aligning multi-channel
//! feature pyramids with per-pixel depth, using inverse-compositional
//! Gauss-Newton on SE(3), coarse to fine. Also provides point selection,
//! view-synthesis losses, trajectory and depth evaluation, and a synthetic
//! scene renderer with exact ground truth.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod grid;
pub mod losses;
pub mod pyramid;
pub mod random;
pub mod selection;
pub mod solver;
pub mod synthetic;

pub use error::{Error, Result};
pub use geometry::{Intrinsics, Pixel, RigidTransform, Twist};
pub use grid::{Grid, GridKind, PatchSpec};
pub use pyramid::{LevelConfig, Pyramid, PyramidConfig, LEVELS};
pub use selection::{ProbabilityMap, SelectionMask};
pub use solver::{solve_level, solve_pyramid, SolveReport, SolverConfig};
