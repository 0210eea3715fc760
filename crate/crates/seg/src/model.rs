//! Trained attention U-Net weights, prediction, and the checkpoint format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use vesselid_core::evaluation::{Prediction, Segmenter};
use vesselid_core::image::{GrayImage, LabelImage};
use vesselid_core::io::{decode_container, encode_container, read_bytes, write_bytes};
use vesselid_core::PlaneMapping;

use crate::error::{Result, SegError};
use crate::layers::ParamSpec;
use crate::unet::{ModelConfig, Network, CLASSES};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VIDCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct UNetModel {
    network: Network,
    params: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    version: u32,
    config: ModelConfig,
    tensors: Vec<ParamSpec>,
    /// Free-form provenance, e.g. the training epoch.
    #[serde(default)]
    tag: String,
}

impl UNetModel {
    /// Untrained model with deterministic initial weights.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let network = Network::new(config)?;
        let params = network.init(seed);
        Ok(Self { network, params })
    }

    pub fn from_params(config: &ModelConfig, params: Vec<f32>) -> Result<Self> {
        let network = Network::new(config)?;
        if params.len() != network.param_count() {
            return Err(SegError::shape(format!(
                "expected {} parameters, got {}",
                network.param_count(),
                params.len()
            )));
        }
        Ok(Self { network, params })
    }

    pub fn config(&self) -> &ModelConfig {
        self.network.config()
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    /// `(width, height)` the network accepts.
    pub fn input_dims(&self) -> (usize, usize) {
        (self.config().input_width, self.config().input_height)
    }

    /// Runs the network on an image of exactly the input dims.
    pub fn predict(&self, image: &GrayImage) -> Result<Prediction> {
        let (w, h) = self.input_dims();
        if image.dims() != (w, h) {
            return Err(SegError::shape(format!(
                "model expects {w}x{h}, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        let probs = self.network.infer(&self.params, image.data())?;
        Ok(Prediction::from_probabilities(w, h, probs)?)
    }

    pub fn to_bytes(&self, tag: &str) -> Result<Vec<u8>> {
        let header = CheckpointHeader {
            version: CHECKPOINT_VERSION,
            config: self.config().clone(),
            tensors: self.network.specs().to_vec(),
            tag: tag.to_string(),
        };
        let mut payload = Vec::with_capacity(self.params.len() * 4);
        for v in &self.params {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        Ok(encode_container(CHECKPOINT_MAGIC, &header, &payload)?)
    }

    /// Returns the model and the checkpoint tag.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<(Self, String)> {
        let malformed = |reason: String| SegError::Core(vesselid_core::Error::malformed(path, reason));
        let (header, payload): (CheckpointHeader, _) = decode_container(CHECKPOINT_MAGIC, bytes, path)?;
        if header.version != CHECKPOINT_VERSION {
            return Err(malformed(format!("unsupported checkpoint version {}", header.version)));
        }
        let network = Network::new(&header.config)?;
        if header.tensors != network.specs() {
            return Err(malformed("tensor table does not match the recorded config".into()));
        }
        if payload.len() != network.param_count() * 4 {
            return Err(malformed(format!(
                "expected {} parameter bytes, found {}",
                network.param_count() * 4,
                payload.len()
            )));
        }
        let params = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok((Self { network, params }, header.tag))
    }

    pub fn save(&self, path: &Path, tag: &str) -> Result<()> {
        Ok(write_bytes(path, &self.to_bytes(tag)?)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_bytes(&read_bytes(path)?, path)?.0)
    }
}

/// Adapts a model to arbitrary frame sizes: bilinear resize in, nearest
/// resize of the probabilities out.
#[derive(Clone, Debug)]
pub struct ModelSegmenter {
    pub model: UNetModel,
    name: String,
}

impl ModelSegmenter {
    pub fn new(model: UNetModel) -> Self {
        Self {
            model,
            name: "attention_unet".into(),
        }
    }

    pub fn predict_any(&self, image: &GrayImage) -> Result<Prediction> {
        let (w, h) = self.model.input_dims();
        if image.dims() == (w, h) {
            return self.model.predict(image);
        }
        let small = self.model.predict(&image.resize_bilinear(w, h))?;
        let (ow, oh) = image.dims();
        let n = ow * oh;
        let mut probs = vec![0.0f32; CLASSES * n];
        for c in 0..CLASSES {
            let plane = GrayImage::from_vec(w, h, small.channel(c).to_vec())?.resize_nearest(ow, oh);
            probs[c * n..(c + 1) * n].copy_from_slice(plane.data());
        }
        Ok(Prediction::from_probabilities(ow, oh, probs)?)
    }
}

impl Segmenter for ModelSegmenter {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, image: &GrayImage, _mapping: &PlaneMapping) -> vesselid_core::Result<Prediction> {
        Ok(self.predict_any(image)?)
    }
}

/// Resizes a sample to the model input: bilinear for the image, nearest for
/// the mask.
pub fn fit_to_model(image: &GrayImage, mask: &LabelImage, (w, h): (usize, usize)) -> (GrayImage, LabelImage) {
    (image.resize_bilinear(w, h), mask.resize_nearest(w, h))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            levels: 2,
            base_channels: 4,
            input_width: 16,
            input_height: 8,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn zero_image_is_uniform_and_dims_are_checked() {
        let m = UNetModel::init(&cfg(), 5).unwrap();
        let p = m.predict(&GrayImage::filled(16, 8, 0.0)).unwrap();
        assert!(p.probabilities().iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-6));
        assert!(p.mask().data().iter().all(|&l| l == 0));
        assert!(matches!(m.predict(&GrayImage::filled(8, 16, 0.0)), Err(SegError::Shape(_))));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let m = UNetModel::init(&cfg(), 9).unwrap();
        let bytes = m.to_bytes("epoch-3").unwrap();
        let (back, tag) = UNetModel::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(tag, "epoch-3");
        assert_eq!(back.params(), m.params());
        let img = GrayImage::from_fn(16, 8, |x, y| ((x * 3 + y * 5) % 7) as f32 / 7.0);
        assert_eq!(back.predict(&img).unwrap(), m.predict(&img).unwrap());
        let mut bad = bytes.clone();
        bad.truncate(bytes.len() - 4);
        assert!(UNetModel::from_bytes(&bad, Path::new("mem")).is_err());
        assert!(UNetModel::from_bytes(b"VIDVOL01\0\0\0\0\0\0\0\0", Path::new("mem")).is_err());
    }

    #[test]
    fn adapter_resizes_and_keeps_simplex() {
        let s = ModelSegmenter::new(UNetModel::init(&cfg(), 1).unwrap());
        let img = GrayImage::from_fn(13, 21, |x, y| ((x + y) % 4) as f32 / 4.0);
        let p = s.predict_any(&img).unwrap();
        assert_eq!((p.width(), p.height()), (13, 21));
        let n = 13 * 21;
        for i in 0..n {
            let sum: f32 = (0..CLASSES).map(|c| p.probabilities()[c * n + i]).sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }
}
