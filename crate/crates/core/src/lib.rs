//! Rotation-adaptive visual object tracking with motion consistency.
//!
//! The crate is layered bottom-up:
//!
//! - [`geometry`]: angles, oriented boxes, IoU and center error.
//! - [`imageproc`]: grayscale images, PGM I/O, crops and rotate/scale warps.
//! - [`correlation`]: normalized features, FFT cross-correlation, the
//!   ridge-regression correlation filter and rolling model updates.
//! - [`consistency`]: displacement (angle + distance) smoothing of the
//!   centroid path and Gaussian-weighted fusion of scale response maps.
//! - [`rotation_bank`]: rotated exemplar banks, nearest-angle selection,
//!   top-3 candidates and the score-to-displacement decision.
//! - [`tracker`]: the per-frame state machine for the baseline/D/DS/DSR
//!   variants in fixed-template and updating-template modes.
//! - [`benchmark`]: sequence loading, synthetic sequences, OPE/TRE runs,
//!   success/precision metrics and A/B comparison.

pub mod error;
pub mod geometry;
pub mod grid;
pub mod imageproc;
pub mod correlation;
pub mod consistency;
pub mod rotation_bank;

pub use error::{Error, Result};
pub mod tracker;
pub mod benchmark;
