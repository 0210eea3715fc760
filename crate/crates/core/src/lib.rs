//! Core pipeline for patient-specific portal vessel identification in
//! tracked 2D ultrasound.
//!
//! The crate covers everything that does not involve a learned model:
//!
//! - [`geometry`]: rigid poses and image-plane to world mapping
//! - [`phantom`]: procedural liver phantom with a five-branch portal tree and
//!   simulated tracked sweeps
//! - [`reconstruction`]: trilinear splatting, compounding and hole filling
//! - [`reslice`]: oblique plane sampling and maneuver-driven augmentation
//! - [`evaluation`]: DICE, SSIM, ground-truth projection, the centroid
//!   identification protocol and throughput measurement
//! - [`io`]: volume, tracked-sequence and dataset formats
//!
//! World coordinates are millimetres in a right-handed frame. An image plane
//! spans the local x (lateral, columns) and y (axial depth, rows) axes of its
//! pose; local z is the elevation normal.

pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod image;
pub mod interp;
pub mod io;
pub mod phantom;
pub mod pipeline;
pub mod preset;
pub mod reconstruction;
pub mod reslice;
pub mod rng;
pub mod volume;

pub use error::{Error, Result};
pub use geometry::{ImageGeometry, PlaneMapping, Pose};
pub use image::Image;
pub use phantom::BranchId;
pub use volume::{Grid, Volume};
