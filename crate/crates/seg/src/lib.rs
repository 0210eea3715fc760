//! Per-frame vessel segmenters: an exhaustive SSIM nearest-image matcher, a
//! Hessian vesselness baseline, and a small attention-gated encoder-decoder
//! trained from scratch on CPU.

pub mod brute_force;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod real;
pub mod train;
pub mod unet;
pub mod vesselness;

pub use config::{SegmenterConfig, TrainConfig, Variant};
pub use error::{Result, SegError};
pub use model::{ModelSegmenter, UNetModel};
pub use train::{TrainReport, TrainSample};
pub use unet::ModelConfig;
