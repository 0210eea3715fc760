//! Patient-specific vessel identification: the pipeline stages, the
//! command-line front end and the live reslice service.
//!
//! The numerical work lives in [`vesselid_core`] (geometry, phantom,
//! reconstruction, reslicing, evaluation, file formats) and [`vesselid_seg`]
//! (segmenters and training); both are re-exported here.

pub mod cli;
pub mod frame;
pub mod service;
pub mod stages;

pub use vesselid_core as core;
pub use vesselid_seg as seg;
