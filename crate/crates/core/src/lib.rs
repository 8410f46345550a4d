//! Object placement, scene-flow propagation and occlusion-aware mask
//! generation over 4D scene bundles.
//!
//! The pipeline, front to back:
//!
//! 1. [`bundle`] loads per-frame depth, flow, camera poses and intrinsics
//!    (or [`synth`] generates an analytic scene with exact ground truth).
//! 2. The user positions an [`bundle::ObjectCloud`] in frame 0 with a
//!    [`geom::RigidPlacement`].
//! 3. [`propagation`] carries the placement through time by averaging the 3D
//!    motion of nearby scene points, lifted from 2D optical flow through depth.
//! 4. [`render`] splats the placed object into every frame, tests it against
//!    scene depth and extracts a binary mask per frame.
//!
//! [`refselect`] scores candidate reference images against masked frame
//! crops by mean embedding similarity and picks the best one.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod geom;
pub mod propagation;
pub mod refselect;
pub mod render;
pub mod synth;

pub use bundle::{load_bundle, save_bundle, BundleError, ObjectCloud, SceneBundle};
pub use geom::{CameraIntrinsics, CameraPose, PixelCoord, RigidPlacement, Rotation, Vec3};
