//! Multiscale Hessian vesselness for dark lumens on a brighter background.
//! Binary only: it marks vessel pixels but cannot name branches.

use serde::{Deserialize, Serialize};

use vesselid_core::evaluation::{Prediction, Segmenter};
use vesselid_core::image::{GrayImage, LabelImage};
use vesselid_core::{BranchId, PlaneMapping};

use crate::error::{Result, SegError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VesselnessConfig {
    /// Gaussian scales, mm.
    pub scales_mm: Vec<f64>,
    /// Pixel size, mm.
    pub spacing_mm: f64,
    /// Blob/line sensitivity: larger values penalise round cross-sections less.
    pub beta: f64,
    /// Structureness half-point, in scale-normalised intensity units.
    pub c: f64,
    /// Scale-normalised gradient magnitude at which the edge penalty bites.
    pub gradient_scale: f64,
    /// Response above which a pixel is called vessel.
    pub threshold: f64,
    /// Label written for vessel pixels.
    pub vessel_label: u8,
}

impl Default for VesselnessConfig {
    fn default() -> Self {
        Self {
            scales_mm: vec![1.0, 1.75, 2.5],
            spacing_mm: 0.5,
            beta: 1.0,
            c: 0.08,
            gradient_scale: 0.08,
            threshold: 0.5,
            vessel_label: BranchId::Mpv.as_u8(),
        }
    }
}

impl VesselnessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales_mm.is_empty() || self.scales_mm.iter().any(|s| !(*s > 0.0)) {
            return Err(SegError::config("vesselness needs positive scales"));
        }
        if !(self.spacing_mm > 0.0 && self.beta > 0.0 && self.c > 0.0 && self.gradient_scale > 0.0) {
            return Err(SegError::config("vesselness spacing, beta, c and gradient scale must be positive"));
        }
        if BranchId::from_u8(self.vessel_label).is_none() {
            return Err(SegError::config(format!("vessel label {} is not a branch id", self.vessel_label)));
        }
        Ok(())
    }
}

fn gaussian_taps(sigma: f64) -> [Vec<f64>; 3] {
    let r = (3.0 * sigma).ceil() as isize;
    let xs: Vec<f64> = (-r..=r).map(|i| i as f64).collect();
    let g: Vec<f64> = xs.iter().map(|x| (-x * x / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = g.iter().sum();
    let g0: Vec<f64> = g.iter().map(|v| v / s).collect();
    let g1: Vec<f64> = xs.iter().zip(&g0).map(|(x, v)| -x / (sigma * sigma) * v).collect();
    let g2: Vec<f64> = xs.iter().zip(&g0).map(|(x, v)| (x * x / sigma.powi(4) - 1.0 / (sigma * sigma)) * v).collect();
    [g0, g1, g2]
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Separable correlation: `kx` along rows, `ky` along columns.
fn separable(data: &[f64], w: usize, h: usize, kx: &[f64], ky: &[f64]) -> Vec<f64> {
    let (rx, ry) = ((kx.len() / 2) as isize, (ky.len() / 2) as isize);
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (t, &k) in kx.iter().enumerate() {
                s += k * data[y * w + reflect(x as isize + t as isize - rx, w)];
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (t, &k) in ky.iter().enumerate() {
                s += k * tmp[reflect(y as isize + t as isize - ry, h) * w + x];
            }
            out[y * w + x] = s;
        }
    }
    out
}

/// Response in `[0, 1]`, the maximum over scales.
pub fn vesselness(image: &GrayImage, cfg: &VesselnessConfig) -> Result<GrayImage> {
    cfg.validate()?;
    let (w, h) = image.dims();
    let data: Vec<f64> = image.data().iter().map(|&v| v as f64).collect();
    let mut best = vec![0.0f64; w * h];
    for &s_mm in &cfg.scales_mm {
        let sigma = s_mm / cfg.spacing_mm;
        let [g0, g1, g2] = gaussian_taps(sigma);
        let s2 = sigma * sigma;
        let ixx = separable(&data, w, h, &g2, &g0);
        let iyy = separable(&data, w, h, &g0, &g2);
        let ixy = separable(&data, w, h, &g1, &g1);
        let ix = separable(&data, w, h, &g1, &g0);
        let iy = separable(&data, w, h, &g0, &g1);
        for i in 0..w * h {
            let (a, b, c) = (s2 * ixx[i], s2 * iyy[i], s2 * ixy[i]);
            let mid = 0.5 * (a + b);
            let rad = (0.25 * (a - b) * (a - b) + c * c).sqrt();
            // |l1| <= |l2|
            let (e1, e2) = (mid - rad, mid + rad);
            let (l1, l2) = if e1.abs() <= e2.abs() { (e1, e2) } else { (e2, e1) };
            if l2 <= 0.0 {
                continue;
            }
            let rb = l1 / l2;
            let ss = l1 * l1 + l2 * l2;
            let grad2 = s2 * (ix[i] * ix[i] + iy[i] * iy[i]);
            let v = (-rb * rb / (2.0 * cfg.beta * cfg.beta)).exp()
                * (1.0 - (-ss / (2.0 * cfg.c * cfg.c)).exp())
                * (-grad2 / (2.0 * cfg.gradient_scale * cfg.gradient_scale)).exp();
            if v > best[i] {
                best[i] = v;
            }
        }
    }
    Ok(GrayImage::from_vec(w, h, best.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect())?)
}

/// Thresholded response as a label mask (`vessel_label` or background).
pub fn vessel_mask(image: &GrayImage, cfg: &VesselnessConfig) -> Result<LabelImage> {
    let r = vesselness(image, cfg)?;
    Ok(r.map(|v| if v as f64 > cfg.threshold { cfg.vessel_label } else { 0 }))
}

pub struct VesselnessSegmenter {
    pub config: VesselnessConfig,
}

impl Segmenter for VesselnessSegmenter {
    fn name(&self) -> &str {
        "vesselness"
    }

    fn predict(&self, image: &GrayImage, _mapping: &PlaneMapping) -> vesselid_core::Result<Prediction> {
        Ok(Prediction::one_hot(&vessel_mask(image, &self.config)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(n: usize, r: f64) -> GrayImage {
        let c = (n as f64 - 1.0) / 2.0;
        GrayImage::from_fn(n, n, |x, y| {
            if ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt() <= r {
                0.07
            } else {
                0.62
            }
        })
    }

    #[test]
    fn constant_is_zero() {
        let r = vesselness(&GrayImage::filled(20, 30, 0.4), &VesselnessConfig::default()).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dark_disk_beats_edge() {
        // radius 6 px = 3 mm; scale matched to the radius
        let cfg = VesselnessConfig {
            scales_mm: vec![3.0 / 2f64.sqrt()],
            ..Default::default()
        };
        let d = vesselness(&disk(41, 6.0), &cfg).unwrap();
        let edge = GrayImage::from_fn(41, 41, |x, _| if x < 20 { 0.07 } else { 0.62 });
        let e = vesselness(&edge, &cfg).unwrap();
        let centre = d.get(20, 20);
        let edge_max = e.data().iter().cloned().fold(0.0f32, f32::max);
        assert!(centre > edge_max, "{centre} vs {edge_max}");
        assert!(centre > 0.5);
    }

    #[test]
    fn bright_structures_do_not_respond() {
        let inv = disk(41, 6.0).map(|v| 0.69 - v);
        let r = vesselness(&inv, &VesselnessConfig::default()).unwrap();
        assert!(r.get(20, 20) == 0.0);
    }

    #[test]
    fn rotation_equivariant() {
        let img = GrayImage::from_fn(30, 22, |x, y| {
            let d = ((x as f64 - 9.0).powi(2) / 9.0 + (y as f64 - 12.0).powi(2) / 25.0).sqrt();
            if d < 1.0 { 0.1 } else { 0.6 + 0.01 * ((x * y) % 5) as f32 }
        });
        let rot = GrayImage::from_fn(22, 30, |x, y| img.get(y, 21 - x));
        let cfg = VesselnessConfig::default();
        let (a, b) = (vesselness(&img, &cfg).unwrap(), vesselness(&rot, &cfg).unwrap());
        for y in 0..30 {
            for x in 0..22 {
                assert!((b.get(x, y) - a.get(y, 21 - x)).abs() < 1e-5);
            }
        }
        let m = vessel_mask(&img, &cfg).unwrap();
        assert!(m.data().iter().all(|&l| l == 0 || l == cfg.vessel_label));
    }
}
