//! Segmentation metrics, ground-truth projection, the centroid
//! identification protocol, and throughput measurement.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{ImageGeometry, PlaneMapping, Pose};
use crate::image::{GrayImage, LabelImage};
use crate::phantom::BranchId;
use crate::reslice;
use crate::volume::Volume;
use crate::{Error, Result};

/// Per-pixel class probabilities (channel-major, `BranchId::COUNT` planes)
/// and their argmax mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    width: usize,
    height: usize,
    probabilities: Vec<f32>,
    mask: LabelImage,
}

impl Prediction {
    pub const CHANNELS: usize = BranchId::COUNT;

    /// Wraps channel-major probabilities; the mask is the per-pixel argmax
    /// with ties going to the lower label.
    pub fn from_probabilities(width: usize, height: usize, probabilities: Vec<f32>) -> Result<Self> {
        let n = width * height;
        if probabilities.len() != n * Self::CHANNELS {
            return Err(Error::DimensionMismatch {
                expected: format!("{} probabilities", n * Self::CHANNELS),
                actual: format!("{}", probabilities.len()),
            });
        }
        let mask = LabelImage::from_fn(width, height, |x, y| {
            let p = y * width + x;
            let mut best = 0;
            for c in 1..Self::CHANNELS {
                if probabilities[c * n + p] > probabilities[best * n + p] {
                    best = c;
                }
            }
            best as u8
        });
        Ok(Self {
            width,
            height,
            probabilities,
            mask,
        })
    }

    /// Hard prediction: probability 1 on the given label.
    pub fn one_hot(mask: &LabelImage) -> Self {
        let n = mask.len();
        let mut probabilities = vec![0.0f32; n * Self::CHANNELS];
        for (p, &l) in mask.data().iter().enumerate() {
            probabilities[(l as usize).min(Self::CHANNELS - 1) * n + p] = 1.0;
        }
        Self {
            width: mask.width(),
            height: mask.height(),
            probabilities,
            mask: mask.map(|l| l.min(Self::CHANNELS as u8 - 1)),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn probabilities(&self) -> &[f32] {
        &self.probabilities
    }

    /// Probability plane of class `c`.
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.probabilities[c * n..(c + 1) * n]
    }

    pub fn mask(&self) -> &LabelImage {
        &self.mask
    }

    pub fn into_mask(self) -> LabelImage {
        self.mask
    }

    /// Largest deviation of a per-pixel channel sum from 1.
    pub fn simplex_error(&self) -> f64 {
        let n = self.width * self.height;
        (0..n)
            .map(|p| {
                let s: f64 = (0..Self::CHANNELS).map(|c| self.probabilities[c * n + p] as f64).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Per-frame segmenter. Learned segmenters only look at the image; the
/// plane mapping is available for geometric ones such as the oracle.
pub trait Segmenter: Send + Sync {
    fn name(&self) -> &str;
    fn predict(&self, image: &GrayImage, mapping: &PlaneMapping) -> Result<Prediction>;
}

/// Projects the ground-truth label volume onto the frame plane.
pub struct OracleSegmenter<'a> {
    pub labels: &'a Volume<u8>,
}

impl Segmenter for OracleSegmenter<'_> {
    fn name(&self) -> &str {
        "oracle"
    }

    fn predict(&self, image: &GrayImage, mapping: &PlaneMapping) -> Result<Prediction> {
        let mask = reslice::sample_labels(self.labels, mapping, image.width(), image.height())?;
        Ok(Prediction::one_hot(&mask))
    }
}

/// Predicts background everywhere without looking at the input.
pub struct NoopSegmenter;

impl Segmenter for NoopSegmenter {
    fn name(&self) -> &str {
        "noop"
    }

    fn predict(&self, image: &GrayImage, _: &PlaneMapping) -> Result<Prediction> {
        Ok(Prediction::one_hot(&LabelImage::filled(image.width(), image.height(), 0)))
    }
}

/// `2|P∩G| / (|P|+|G|)` for one label; 1 when both are empty.
pub fn dice(pred: &LabelImage, gt: &LabelImage, branch: BranchId) -> Result<f64> {
    pred.same_dims(gt)?;
    let b = branch.as_u8();
    let (mut inter, mut p, mut g) = (0usize, 0usize, 0usize);
    for (&x, &y) in pred.data().iter().zip(gt.data()) {
        let (px, gy) = (x == b, y == b);
        p += px as usize;
        g += gy as usize;
        inter += (px && gy) as usize;
    }
    Ok(if p + g == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (p + g) as f64
    })
}

fn present(mask: &LabelImage, b: BranchId) -> bool {
    mask.data().contains(&b.as_u8())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchDice {
    pub branch: String,
    /// Mean and standard deviation over all frames (both-empty frames count
    /// as 1).
    pub mean: f64,
    pub std: f64,
    pub frames: usize,
    /// Mean over frames where the branch appears in prediction or truth.
    pub present_mean: Option<f64>,
    pub present_frames: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiceReport {
    pub per_branch: Vec<BranchDice>,
    /// Mean over frames of the per-frame mean over the five branches.
    pub overall_mean: f64,
    /// Mean over all (frame, branch) pairs where the branch appears in
    /// prediction or truth; `None` if there are none.
    pub foreground_mean: Option<f64>,
    pub frames: usize,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

impl DiceReport {
    pub fn from_masks<'a>(pairs: impl IntoIterator<Item = (&'a LabelImage, &'a LabelImage)>) -> Result<Self> {
        let mut all: [Vec<f64>; 5] = Default::default();
        let mut fg: [Vec<f64>; 5] = Default::default();
        let mut frame_means = Vec::new();
        for (pred, gt) in pairs {
            let mut sum = 0.0;
            for (i, b) in BranchId::LABELED.into_iter().enumerate() {
                let d = dice(pred, gt, b)?;
                all[i].push(d);
                if present(pred, b) || present(gt, b) {
                    fg[i].push(d);
                }
                sum += d;
            }
            frame_means.push(sum / 5.0);
        }
        let per_branch = BranchId::LABELED
            .into_iter()
            .enumerate()
            .map(|(i, b)| {
                let (mean, std) = mean_std(&all[i]);
                BranchDice {
                    branch: b.name().to_string(),
                    mean,
                    std,
                    frames: all[i].len(),
                    present_mean: (!fg[i].is_empty()).then(|| mean_std(&fg[i]).0),
                    present_frames: fg[i].len(),
                }
            })
            .collect();
        let fg_all: Vec<f64> = fg.iter().flatten().copied().collect();
        Ok(Self {
            per_branch,
            overall_mean: mean_std(&frame_means).0,
            foreground_mean: (!fg_all.is_empty()).then(|| mean_std(&fg_all).0),
            frames: frame_means.len(),
        })
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:>15} {:>8} {:>12} {:>8}", "branch", "dice", "frames", "dice|present", "present");
        for b in &self.per_branch {
            let pm = b.present_mean.map_or("-".to_string(), |m| format!("{m:.3}"));
            let _ = writeln!(
                s,
                "{:<8} {:>7.3} ± {:<5.3} {:>8} {:>12} {:>8}",
                b.branch, b.mean, b.std, b.frames, pm, b.present_frames
            );
        }
        let fg = self.foreground_mean.map_or("-".to_string(), |m| format!("{m:.3}"));
        let _ = writeln!(s, "{:<8} {:>7.3} {:>16} {:>12}", "overall", self.overall_mean, self.frames, fg);
        s
    }
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Normalised 1D Gaussian taps of the SSIM window.
pub fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut k: [f64; SSIM_WINDOW] =
        std::array::from_fn(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian filter over the positions where the window fits.
fn blur_valid(data: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..SSIM_WINDOW).map(|t| k[t] * data[y * w + x + t]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|t| k[t] * tmp[(y + t) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity with an 11×11 Gaussian window (σ = 1.5),
/// K1 = 0.01, K2 = 0.03 and dynamic range 1, averaged over the positions
/// where the window fits inside the image.
pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    a.same_dims(b)?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidParameter(format!(
            "SSIM needs at least {SSIM_WINDOW}×{SSIM_WINDOW} pixels, got {w}×{h}"
        )));
    }
    let k = ssim_kernel();
    let x: Vec<f64> = a.data().iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = b.data().iter().map(|&v| v as f64).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let (mx, my) = (blur_valid(&x, w, h, &k), blur_valid(&y, w, h, &k));
    let (bxx, byy, bxy) = (blur_valid(&xx, w, h, &k), blur_valid(&yy, w, h, &k), blur_valid(&xy, w, h, &k));
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let sxx = bxx[i] - ux * ux;
            let syy = byy[i] - uy * uy;
            let sxy = bxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * sxy + c2)) / ((ux * ux + uy * uy + c1) * (sxx + syy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

/// Nearest-neighbour projection of the label volume onto the plane at `pose`.
pub fn project_ground_truth(labels: &Volume<u8>, pose: &Pose, g: &ImageGeometry) -> Result<LabelImage> {
    reslice::sample_labels(labels, &PlaneMapping::new(*pose, g), g.width, g.height)
}

/// A predicted argmax mask and where its pixels sit in the world.
#[derive(Clone, Debug)]
pub struct FramePrediction {
    pub mask: LabelImage,
    pub mapping: PlaneMapping,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    FalseNegative,
    TrueNegative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentEvent {
    pub frame: usize,
    pub branch: BranchId,
    pub outcome: Outcome,
    /// World centroid of the predicted region, when there is one.
    pub centroid: Option<[f64; 3]>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Counts {
    fn add(&mut self, o: Outcome) {
        match o {
            Outcome::TruePositive => self.tp += 1,
            Outcome::FalsePositive => self.fp += 1,
            Outcome::FalseNegative => self.fn_ += 1,
            Outcome::TrueNegative => self.tn += 1,
        }
    }

    pub fn ppv(&self) -> Option<f64> {
        (self.tp + self.fp > 0).then(|| self.tp as f64 / (self.tp + self.fp) as f64)
    }

    pub fn tpr(&self) -> Option<f64> {
        (self.tp + self.fn_ > 0).then(|| self.tp as f64 / (self.tp + self.fn_) as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchIdentification {
    pub branch: String,
    pub counts: Counts,
    pub ppv: Option<f64>,
    pub tpr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentificationReport {
    pub tolerance_mm: f64,
    pub per_branch: Vec<BranchIdentification>,
    pub overall: Counts,
    pub ppv: Option<f64>,
    pub tpr: Option<f64>,
    /// Point-annotation scoring: only TP/FP are meaningful, recall is not
    /// reported.
    pub precision_only: bool,
    pub events: Vec<IdentEvent>,
}

impl IdentificationReport {
    fn from_events(events: Vec<IdentEvent>, tolerance_mm: f64, precision_only: bool) -> Self {
        let mut per = [(); 5].map(|_| Counts::default());
        let mut overall = Counts::default();
        for e in &events {
            per[e.branch.as_u8() as usize - 1].add(e.outcome);
            overall.add(e.outcome);
        }
        let tpr = |c: &Counts| if precision_only { None } else { c.tpr() };
        Self {
            tolerance_mm,
            per_branch: BranchId::LABELED
                .into_iter()
                .zip(per)
                .map(|(b, counts)| BranchIdentification {
                    branch: b.name().to_string(),
                    ppv: counts.ppv(),
                    tpr: tpr(&counts),
                    counts,
                })
                .collect(),
            ppv: overall.ppv(),
            tpr: tpr(&overall),
            overall,
            precision_only,
            events,
        }
    }

    pub fn branch(&self, b: BranchId) -> &BranchIdentification {
        &self.per_branch[b.as_u8() as usize - 1]
    }

    pub fn to_table(&self) -> String {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        let mut s = String::new();
        let _ = writeln!(s, "tolerance {:.1} mm", self.tolerance_mm);
        let _ = writeln!(s, "{:<8} {:>5} {:>5} {:>5} {:>5} {:>6} {:>6}", "branch", "TP", "FP", "FN", "TN", "PPV", "TPR");
        let rows = self
            .per_branch
            .iter()
            .map(|b| (b.branch.as_str(), &b.counts, b.ppv, b.tpr))
            .chain(std::iter::once(("overall", &self.overall, self.ppv, self.tpr)));
        for (name, c, ppv, tpr) in rows {
            let _ = writeln!(
                s,
                "{:<8} {:>5} {:>5} {:>5} {:>5} {:>6} {:>6}",
                name,
                c.tp,
                c.fp,
                c.fn_,
                c.tn,
                f(ppv),
                f(tpr)
            );
        }
        s
    }
}

/// True when `p` lies in a voxel labelled `branch` or within `tolerance_mm`
/// of the centre of one.
pub fn within_branch(labels: &Volume<u8>, branch: BranchId, p: &Vector3<f64>, tolerance_mm: f64) -> bool {
    let grid = labels.grid();
    let b = branch.as_u8();
    let idx = grid.world_to_index(p);
    if grid.contains_index(&idx) {
        let r: [usize; 3] = std::array::from_fn(|a| (idx[a].round().max(0.0) as usize).min(grid.dims[a] - 1));
        if labels.get(r[0], r[1], r[2]) == b {
            return true;
        }
    }
    if tolerance_mm <= 0.0 {
        return false;
    }
    let reach: [f64; 3] = std::array::from_fn(|a| tolerance_mm / grid.spacing[a]);
    let lo: [i64; 3] = std::array::from_fn(|a| (idx[a] - reach[a]).ceil().max(0.0) as i64);
    let hi: [i64; 3] = std::array::from_fn(|a| (idx[a] + reach[a]).floor().min(grid.dims[a] as f64 - 1.0) as i64);
    let t2 = tolerance_mm * tolerance_mm;
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                let (i, j, k) = (i as usize, j as usize, k as usize);
                if labels.get(i, j, k) == b && (grid.voxel_center(i, j, k) - p).norm_squared() <= t2 {
                    return true;
                }
            }
        }
    }
    false
}

/// Pixel-mean centroid of label `b` in `mask`, in pixel coordinates.
pub fn centroid(mask: &LabelImage, b: BranchId) -> Option<[f64; 2]> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) == b.as_u8() {
                sx += x as f64;
                sy += y as f64;
                n += 1;
            }
        }
    }
    (n > 0).then(|| [sx / n as f64, sy / n as f64])
}

/// Scores each (frame, branch): a predicted region whose world centroid is
/// within `tolerance_mm` of the branch's labelled voxels is a TP, otherwise
/// an FP; a branch in the projected ground truth with no predicted region is
/// an FN; absent from both is a TN.
pub fn identify(frames: &[FramePrediction], labels: &Volume<u8>, tolerance_mm: f64) -> Result<IdentificationReport> {
    let per_frame: Vec<Vec<IdentEvent>> = frames
        .par_iter()
        .enumerate()
        .map(|(f, fp)| {
            let (w, h) = fp.mask.dims();
            let gt = reslice::resample_labels(labels, &fp.mapping, w, h);
            BranchId::LABELED
                .into_iter()
                .map(|b| {
                    let c = centroid(&fp.mask, b).map(|[u, v]| fp.mapping.to_world(u, v));
                    let outcome = match (c, present(&gt, b)) {
                        (Some(p), _) if within_branch(labels, b, &p, tolerance_mm) => Outcome::TruePositive,
                        (Some(_), _) => Outcome::FalsePositive,
                        (None, true) => Outcome::FalseNegative,
                        (None, false) => Outcome::TrueNegative,
                    };
                    IdentEvent {
                        frame: f,
                        branch: b,
                        outcome,
                        centroid: c.map(|p| [p.x, p.y, p.z]),
                    }
                })
                .collect()
        })
        .collect();
    Ok(IdentificationReport::from_events(
        per_frame.into_iter().flatten().collect(),
        tolerance_mm,
        false,
    ))
}

/// A clinician's claim that `branch` is at a world point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointAnnotation {
    pub frame: usize,
    pub branch: BranchId,
    pub point: [f64; 3],
}

/// Precision-only scoring of point annotations.
pub fn score_points(points: &[PointAnnotation], labels: &Volume<u8>, tolerance_mm: f64) -> IdentificationReport {
    let events = points
        .iter()
        .filter(|a| a.branch != BranchId::Background)
        .map(|a| {
            let p = Vector3::from(a.point);
            IdentEvent {
                frame: a.frame,
                branch: a.branch,
                outcome: if within_branch(labels, a.branch, &p, tolerance_mm) {
                    Outcome::TruePositive
                } else {
                    Outcome::FalsePositive
                },
                centroid: Some(a.point),
            }
        })
        .collect();
    IdentificationReport::from_events(events, tolerance_mm, true)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_s: f64,
    pub std_s: f64,
    pub p50_s: f64,
    pub p95_s: f64,
    pub max_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub label: String,
    pub frames: usize,
    pub duration_s: f64,
    pub fps: f64,
    pub latency: LatencyStats,
}

impl ThroughputReport {
    pub fn from_latencies(label: &str, latencies: &[f64], duration_s: f64) -> Self {
        let mut sorted = latencies.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| {
            if sorted.is_empty() {
                0.0
            } else {
                sorted[((sorted.len() - 1) as f64 * p).round() as usize]
            }
        };
        let (mean_s, std_s) = mean_std(latencies);
        Self {
            label: label.to_string(),
            frames: latencies.len(),
            duration_s,
            fps: latencies.len() as f64 / duration_s.max(f64::MIN_POSITIVE),
            latency: LatencyStats {
                mean_s,
                std_s,
                p50_s: q(0.5),
                p95_s: q(0.95),
                max_s: sorted.last().copied().unwrap_or(0.0),
            },
        }
    }

    pub fn to_table(&self) -> String {
        format!(
            "{:<24} {:>7} {:>10} {:>8} {:>12} {:>12}\n{:<24} {:>7} {:>10.3} {:>8.2} {:>12.4} {:>12.4}\n",
            "pipeline",
            "frames",
            "seconds",
            "fps",
            "mean s",
            "p95 s",
            self.label,
            self.frames,
            self.duration_s,
            self.fps,
            self.latency.mean_s,
            self.latency.p95_s
        )
    }
}

/// Times `step(i)` for `i in 0..frames` sequentially, wall clock over the
/// whole run.
pub fn measure(label: &str, frames: usize, mut step: impl FnMut(usize) -> Result<()>) -> Result<ThroughputReport> {
    if frames == 0 {
        return Err(Error::InvalidParameter("benchmark needs at least one frame".into()));
    }
    let mut latencies = Vec::with_capacity(frames);
    let start = Instant::now();
    for i in 0..frames {
        let t = Instant::now();
        step(i)?;
        latencies.push(t.elapsed().as_secs_f64());
    }
    let duration = start.elapsed().as_secs_f64();
    Ok(ThroughputReport::from_latencies(label, &latencies, duration))
}

/// Runs `segmenter` over every frame in order.
pub fn benchmark(segmenter: &dyn Segmenter, frames: &[(GrayImage, PlaneMapping)]) -> Result<ThroughputReport> {
    measure(segmenter.name(), frames.len(), |i| {
        segmenter.predict(&frames[i].0, &frames[i].1).map(|_| ())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;
    use crate::volume::Grid;

    #[test]
    fn dice_examples() {
        let full = LabelImage::filled(8, 4, 1);
        let left = LabelImage::from_fn(8, 4, |x, _| u8::from(x < 4));
        let right = LabelImage::from_fn(8, 4, |x, _| u8::from(x >= 4));
        assert_eq!(dice(&full, &full, BranchId::Mpv).unwrap(), 1.0);
        assert_eq!(dice(&left, &right, BranchId::Mpv).unwrap(), 0.0);
        assert!((dice(&left, &full, BranchId::Mpv).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(dice(&full, &full, BranchId::Llpv).unwrap(), 1.0);
        assert_eq!(dice(&left, &full, BranchId::Mpv).unwrap(), dice(&full, &left, BranchId::Mpv).unwrap());
    }

    #[test]
    fn report_means() {
        let gt = LabelImage::from_fn(4, 4, |x, _| if x < 2 { 1 } else { 0 });
        let empty = LabelImage::filled(4, 4, 0);
        let r = DiceReport::from_masks([(&gt, &gt), (&empty, &gt)]).unwrap();
        assert_eq!(r.frames, 2);
        // frame 1 all ones; frame 2: MPV 0, others 1
        assert!((r.overall_mean - (1.0 + 0.8) / 2.0).abs() < 1e-12);
        assert_eq!(r.foreground_mean, Some(0.5));
        assert_eq!(r.per_branch[0].present_frames, 2);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<DiceReport>(&json).unwrap(), r);
        assert!(r.to_table().contains("MPV"));
    }

    fn textured(w: usize, h: usize) -> GrayImage {
        Image::from_fn(w, h, |x, y| (((x * 13 + y * 7) % 23) as f32 / 23.0 + (y as f32 / h as f32)) / 2.0)
    }

    #[test]
    fn ssim_identities() {
        let a = textured(32, 24);
        let b = a.map(|v| 1.0 - v);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let ab = ssim(&a, &b).unwrap();
        assert!(ab < 1.0);
        assert!((ab - ssim(&b, &a).unwrap()).abs() < 1e-9);
        assert!(ssim(&Image::filled(5, 5, 0.0), &Image::filled(5, 5, 0.0)).is_err());
        let k = ssim_kernel();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prediction_argmax_ties_low() {
        let mut probs = vec![0.0f32; 6];
        probs[2] = 0.5;
        probs[4] = 0.5;
        let p = Prediction::from_probabilities(1, 1, probs).unwrap();
        assert_eq!(p.mask().get(0, 0), 2);
        let uniform = Prediction::from_probabilities(1, 1, vec![1.0 / 6.0; 6]).unwrap();
        assert_eq!(uniform.mask().get(0, 0), 0);
        assert!(uniform.simplex_error() < 1e-6);
        assert!(Prediction::from_probabilities(2, 1, vec![0.0; 6]).is_err());
    }

    fn slab() -> Volume<u8> {
        // MPV occupies the slab 4 ≤ x ≤ 7 (voxel centres), 1 mm voxels
        let g = Grid::new([20, 20, 20], 1.0, [0.0; 3]);
        let data = (0..g.len()).map(|i| u8::from((4..=7).contains(&g.unlinear(i)[0]))).collect();
        Volume::from_vec(g, data).unwrap()
    }

    #[test]
    fn within_branch_distances() {
        let v = slab();
        let p = |x: f64| Vector3::new(x, 10.0, 10.0);
        assert!(within_branch(&v, BranchId::Mpv, &p(5.0), 0.0));
        assert!(within_branch(&v, BranchId::Mpv, &p(7.4), 0.0));
        assert!(!within_branch(&v, BranchId::Mpv, &p(9.0), 0.0));
        assert!(within_branch(&v, BranchId::Mpv, &p(9.0), 2.0));
        assert!(!within_branch(&v, BranchId::Mpv, &p(9.0), 1.9));
        assert!(!within_branch(&v, BranchId::Rlpv, &p(5.0), 5.0));
    }

    #[test]
    fn identify_outcomes() {
        let v = slab();
        let g = ImageGeometry::new(20, 20, 1.0).unwrap();
        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, 10.0));
        let gt = project_ground_truth(&v, &pose, &g).unwrap();
        let mapping = PlaneMapping::new(pose, &g);
        let oracle = identify(&[FramePrediction { mask: gt.clone(), mapping }], &v, 5.0).unwrap();
        assert_eq!(oracle.branch(BranchId::Mpv).counts.tp, 1);
        assert_eq!(oracle.overall.tn, 4);
        assert_eq!((oracle.ppv, oracle.tpr), (Some(1.0), Some(1.0)));
        // empty prediction where truth is present
        let none = identify(&[FramePrediction { mask: LabelImage::filled(20, 20, 0), mapping }], &v, 5.0).unwrap();
        assert_eq!(none.overall.fn_, 1);
        assert_eq!(none.ppv, None);
        // region far from the slab
        let far = LabelImage::from_fn(20, 20, |x, _| u8::from(x >= 17));
        let r = identify(&[FramePrediction { mask: far, mapping }], &v, 5.0).unwrap();
        assert_eq!(r.overall.fp, 1);
        assert_eq!(r.ppv, Some(0.0));
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<IdentificationReport>(&json).unwrap(), r);
    }

    #[test]
    fn points_are_precision_only() {
        let v = slab();
        let pts = [
            PointAnnotation {
                frame: 0,
                branch: BranchId::Mpv,
                point: [5.0, 3.0, 3.0],
            },
            PointAnnotation {
                frame: 1,
                branch: BranchId::Mpv,
                point: [15.0, 3.0, 3.0],
            },
        ];
        let r = score_points(&pts, &v, 5.0);
        assert_eq!(r.ppv, Some(0.5));
        assert_eq!(r.tpr, None);
    }

    #[test]
    fn projection_background_and_misses() {
        let v = slab();
        let g = ImageGeometry::new(5, 5, 1.0).unwrap();
        let pose = Pose::from_translation(Vector3::new(12.0, 0.0, 3.0));
        assert!(project_ground_truth(&v, &pose, &g).unwrap().data().iter().all(|&l| l == 0));
        let away = Pose::from_translation(Vector3::new(0.0, 0.0, 40.0));
        assert!(project_ground_truth(&v, &away, &g).is_err());
    }

    #[test]
    fn throughput_definition() {
        let r = ThroughputReport::from_latencies("x", &[0.1, 0.1, 0.2, 0.1], 0.5);
        assert!((r.fps - 8.0).abs() < 1e-12);
        assert_eq!(r.latency.max_s, 0.2);
        let g = ImageGeometry::new(4, 4, 1.0).unwrap();
        let frames = vec![(GrayImage::filled(4, 4, 0.5), PlaneMapping::new(Pose::identity(), &g)); 3];
        let b = benchmark(&NoopSegmenter, &frames).unwrap();
        assert_eq!(b.frames, 3);
        assert!(measure("none", 0, |_| Ok(())).is_err());
    }
}
