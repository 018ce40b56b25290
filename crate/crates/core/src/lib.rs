//! Structured float representations for 2.5D joint coordinates.
//!
//! A joint `(u, v, d)` in normalized crop coordinates is encoded as a
//! per-joint heatmap whose center of mass is `(u, v)` and a depth offset
//! map whose heatmap-weighted on-hand average recovers `d`. Both decoders
//! are differentiable, so representations can also be fitted directly
//! through them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod depth;
pub mod error;
pub mod fit;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod plane;
pub mod preprocess;
pub mod synth;
pub mod types;

pub use error::{Result, SfrError};
pub use types::{
    CameraIntrinsics, CropGeometry, DepthFrame, DepthOffsetMap, Grid, Heatmap, JointSetUvd,
    JointUvd, MaskMatrix, NormalizationCube,
};
