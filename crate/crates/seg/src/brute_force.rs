//! Exhaustive nearest-image search by SSIM over an augmentation dataset.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use vesselid_core::evaluation::{ssim_kernel, Prediction, Segmenter, SSIM_K1, SSIM_K2, SSIM_WINDOW};
use vesselid_core::image::{GrayImage, LabelImage};
use vesselid_core::PlaneMapping;

use crate::error::{Result, SegError};

/// Valid-window Gaussian blur, separable, in `f32`.
struct Blur {
    k: [f32; SSIM_WINDOW],
    w: usize,
    h: usize,
}

impl Blur {
    fn new(w: usize, h: usize) -> Self {
        let k64 = ssim_kernel();
        Self {
            k: std::array::from_fn(|i| k64[i] as f32),
            w,
            h,
        }
    }

    fn out_dims(&self) -> (usize, usize) {
        (self.w + 1 - SSIM_WINDOW, self.h + 1 - SSIM_WINDOW)
    }

    fn apply(&self, data: &[f32], tmp: &mut Vec<f32>, out: &mut Vec<f32>) {
        let (ow, oh) = self.out_dims();
        tmp.clear();
        tmp.resize(ow * self.h, 0.0);
        for y in 0..self.h {
            let src = &data[y * self.w..(y + 1) * self.w];
            let dst = &mut tmp[y * ow..(y + 1) * ow];
            for (t, &kt) in self.k.iter().enumerate() {
                for (d, &s) in dst.iter_mut().zip(&src[t..t + ow]) {
                    *d += kt * s;
                }
            }
        }
        out.clear();
        out.resize(ow * oh, 0.0);
        for y in 0..oh {
            let dst = &mut out[y * ow..(y + 1) * ow];
            for (t, &kt) in self.k.iter().enumerate() {
                for (d, &s) in dst.iter_mut().zip(&tmp[(y + t) * ow..(y + t + 1) * ow]) {
                    *d += kt * s;
                }
            }
        }
    }
}

/// Per-image statistics reused across comparisons.
#[derive(Clone, Debug)]
struct Stats {
    pixels: Vec<f32>,
    mean: Vec<f32>,
    var: Vec<f32>,
}

fn stats(blur: &Blur, img: &GrayImage) -> Stats {
    let (mut tmp, mut mean, mut sq_blur) = (Vec::new(), Vec::new(), Vec::new());
    blur.apply(img.data(), &mut tmp, &mut mean);
    let sq: Vec<f32> = img.data().iter().map(|v| v * v).collect();
    blur.apply(&sq, &mut tmp, &mut sq_blur);
    let var = sq_blur.iter().zip(&mean).map(|(s, m)| s - m * m).collect();
    Stats {
        pixels: img.data().to_vec(),
        mean,
        var,
    }
}

fn pair_ssim(blur: &Blur, a: &Stats, b: &Stats, prod: &mut Vec<f32>, tmp: &mut Vec<f32>, cov: &mut Vec<f32>) -> f64 {
    prod.clear();
    prod.extend(a.pixels.iter().zip(&b.pixels).map(|(x, y)| x * y));
    blur.apply(prod, tmp, cov);
    let c1 = (SSIM_K1 * SSIM_K1) as f32;
    let c2 = (SSIM_K2 * SSIM_K2) as f32;
    let mut total = 0.0f64;
    for i in 0..cov.len() {
        let (ux, uy) = (a.mean[i], b.mean[i]);
        let sxy = cov[i] - ux * uy;
        let v = ((2.0 * ux * uy + c1) * (2.0 * sxy + c2)) / ((ux * ux + uy * uy + c1) * (a.var[i] + b.var[i] + c2));
        total += v as f64;
    }
    total / cov.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub index: usize,
    pub ssim: f64,
    pub search_seconds: f64,
}

/// Index of images with their label masks.
pub struct SsimIndex {
    blur: Blur,
    entries: Vec<Stats>,
    masks: Vec<LabelImage>,
}

impl SsimIndex {
    pub fn build<'a>(items: impl IntoIterator<Item = (&'a GrayImage, &'a LabelImage)>) -> Result<Self> {
        let items: Vec<_> = items.into_iter().collect();
        let Some(&(first, _)) = items.first() else {
            return Err(SegError::Dataset("brute-force index needs at least one image".into()));
        };
        let (w, h) = first.dims();
        if w < SSIM_WINDOW || h < SSIM_WINDOW {
            return Err(SegError::shape(format!("images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")));
        }
        for (i, (img, mask)) in items.iter().enumerate() {
            if img.dims() != (w, h) || mask.dims() != (w, h) {
                return Err(SegError::shape(format!("index entry {i} does not match {w}x{h}")));
            }
        }
        let blur = Blur::new(w, h);
        let entries = items.par_iter().map(|(img, _)| stats(&blur, img)).collect();
        let masks = items.iter().map(|(_, m)| (*m).clone()).collect();
        Ok(Self { blur, entries, masks })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.blur.w, self.blur.h)
    }

    pub fn mask(&self, index: usize) -> &LabelImage {
        &self.masks[index]
    }

    fn check(&self, query: &GrayImage) -> Result<()> {
        if query.dims() != self.dims() {
            return Err(SegError::shape(format!(
                "query is {}x{}, index holds {}x{}",
                query.width(),
                query.height(),
                self.blur.w,
                self.blur.h
            )));
        }
        Ok(())
    }

    /// SSIM of `query` against every entry, in index order.
    pub fn scores(&self, query: &GrayImage) -> Result<Vec<f64>> {
        self.check(query)?;
        let q = stats(&self.blur, query);
        Ok(self
            .entries
            .par_iter()
            .map_init(
                || (Vec::new(), Vec::new(), Vec::new()),
                |(prod, tmp, cov), e| pair_ssim(&self.blur, &q, e, prod, tmp, cov),
            )
            .collect())
    }

    /// Highest-SSIM entry; ties go to the lowest index.
    pub fn query(&self, query: &GrayImage) -> Result<Match> {
        let start = Instant::now();
        let scores = self.scores(query)?;
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        Ok(Match {
            index: best,
            ssim: scores[best],
            search_seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Best match and its mask as a one-hot prediction.
    pub fn match_prediction(&self, query: &GrayImage) -> Result<(Match, Prediction)> {
        let m = self.query(query)?;
        let p = Prediction::one_hot(&self.masks[m.index]);
        Ok((m, p))
    }
}

pub struct BruteForceSegmenter {
    pub index: SsimIndex,
}

impl Segmenter for BruteForceSegmenter {
    fn name(&self) -> &str {
        "brute_force"
    }

    fn predict(&self, image: &GrayImage, _mapping: &PlaneMapping) -> vesselid_core::Result<Prediction> {
        Ok(self.index.match_prediction(image)?.1)
    }
}
