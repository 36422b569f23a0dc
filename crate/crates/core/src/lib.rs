//! Detection of destabilised shipping containers from onboard monocular video.
//!
//! The signal chain runs downstream of instance segmentation:
//!
//! 1. [`gmc`] estimates the inter-frame camera motion as an affine transform from
//!    background features (container regions excluded) and aligns the current frame
//!    with the previous one.
//! 2. [`optflow`] computes dense Farnebäck optical flow between the previous frame and
//!    the aligned current frame.
//! 3. [`tracker`] keeps persistent container identities (Kalman prediction, IoU plus
//!    appearance association, Hungarian assignment).
//! 4. [`motion`] averages the horizontal flow inside each container mask, removes the
//!    median common motion, and classifies sustained residual motion with IQR-filtered
//!    temporal windows and a scene-adaptive threshold.
//!
//! [`simulator`] renders synthetic container stacks with exact ground truth, and
//! [`pipeline`] ties everything into a batch runner used by the `driftwatch` CLI.

pub mod error;
pub mod gmc;
pub mod imgcore;
pub mod motion;
pub mod optflow;
pub mod pipeline;
pub mod simulator;
pub mod tracker;

pub use error::{Error, Result};
pub use imgcore::{AffineTransform, BitGrid, BoundingBox, GrayFrame, InstanceMask};

/// Crate version string reported by `driftwatch version` and the C API.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
