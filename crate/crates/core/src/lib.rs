//! Moving-object detection for event cameras under ego-motion.
//!
//! Events are grouped into short windows, rotation (and optionally
//! translation) from an IMU is compensated, and two cues are combined: a
//! late-timestamp confidence map in the image plane and cylinder-shaped
//! structures in the (x, y, t) point cloud.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compensation;
pub mod error;
pub mod event;
pub mod fusion;
pub mod pipeline;
pub mod spatial;
pub mod synth;
pub mod temporal;

pub use error::{Error, Result};
