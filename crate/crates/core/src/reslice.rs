//! Oblique reslicing and maneuver-driven dataset augmentation.
//!
//! Plane-local axes follow the image: x lateral (columns), y axial (rows,
//! depth away from the probe face), z elevational (plane normal, the sweep
//! direction). Maneuvers map onto them as
//!
//! | maneuver            | motion                         |
//! |---------------------|--------------------------------|
//! | rotation            | rotation about z               |
//! | tilt                | rotation about x               |
//! | rock                | rotation about y               |
//! | slide               | translation along z            |
//! | transversal slide   | translation along x            |
//! | lift                | translation along y            |
//!
//! and all rotations pivot on the centre of the image.

use std::time::Instant;

use nalgebra::Vector3;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{ImageGeometry, PlaneMapping, Pose};
use crate::image::{GrayImage, LabelImage};
use crate::interp::{self, Interpolation};
use crate::phantom::{transverse_sweep, SweepPlan};
use crate::rng::{self, streams};
use crate::volume::{Grid, Volume};
use crate::{Error, Result};

/// Samples a `width × height` image laid out by `mapping`. Returns the
/// intensity image, the label mask, and the number of pixels inside the
/// intensity volume.
pub fn resample(
    vol: &Volume<f32>,
    labels: &Volume<u8>,
    mapping: &PlaneMapping,
    width: usize,
    height: usize,
    mode: Interpolation,
) -> (GrayImage, LabelImage, usize) {
    let (img, inside) = resample_intensity(vol, mapping, width, height, mode);
    (img, resample_labels(labels, mapping, width, height), inside)
}

fn steps(grid: &Grid, mapping: &PlaneMapping) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let o = grid.world_to_index(&mapping.to_world(0.0, 0.0));
    let du = grid.world_to_index(&mapping.to_world(1.0, 0.0)) - o;
    let dv = grid.world_to_index(&mapping.to_world(0.0, 1.0)) - o;
    (o, du, dv)
}

pub fn resample_intensity(
    vol: &Volume<f32>,
    mapping: &PlaneMapping,
    width: usize,
    height: usize,
    mode: Interpolation,
) -> (GrayImage, usize) {
    let (o, du, dv) = steps(vol.grid(), mapping);
    let mut img = GrayImage::filled(width, height, 0.0);
    let mut inside = 0;
    for v in 0..height {
        let row = o + dv * v as f64;
        for u in 0..width {
            if let Some(s) = interp::sample(vol, &(row + du * u as f64), mode) {
                img.set(u, v, s.clamp(0.0, 1.0));
                inside += 1;
            }
        }
    }
    (img, inside)
}

pub fn resample_labels(labels: &Volume<u8>, mapping: &PlaneMapping, width: usize, height: usize) -> LabelImage {
    labels_counted(labels, mapping, width, height).0
}

fn labels_counted(labels: &Volume<u8>, mapping: &PlaneMapping, width: usize, height: usize) -> (LabelImage, usize) {
    let (o, du, dv) = steps(labels.grid(), mapping);
    let mut mask = LabelImage::filled(width, height, 0);
    let mut inside = 0;
    for v in 0..height {
        let row = o + dv * v as f64;
        for u in 0..width {
            if let Some(l) = interp::sample_nearest(labels, &(row + du * u as f64)) {
                mask.set(u, v, l);
                inside += 1;
            }
        }
    }
    (mask, inside)
}

/// Cubic intensity and nearest-neighbour label slice at `pose`.
pub fn sample_plane(
    vol: &Volume<f32>,
    labels: &Volume<u8>,
    pose: &Pose,
    g: &ImageGeometry,
) -> Result<(GrayImage, LabelImage)> {
    let (img, mask, inside) = resample(vol, labels, &PlaneMapping::new(*pose, g), g.width, g.height, Interpolation::Cubic);
    if inside == 0 {
        return Err(Error::PlaneMissesVolume);
    }
    Ok((img, mask))
}

/// Label-only slice; errors when no pixel lands inside the label grid.
pub fn sample_labels(labels: &Volume<u8>, mapping: &PlaneMapping, width: usize, height: usize) -> Result<LabelImage> {
    match labels_counted(labels, mapping, width, height) {
        (_, 0) => Err(Error::PlaneMissesVolume),
        (mask, _) => Ok(mask),
    }
}

/// Lateral offset of a centred, top-anchored crop of width `crop_w`.
pub fn crop_offset(src_w: usize, crop_w: usize) -> usize {
    (src_w - crop_w) / 2
}

/// Centred, top-anchored crop of image and mask to `g`.
pub fn central_crop(image: &GrayImage, mask: &LabelImage, g: &ImageGeometry) -> Result<(GrayImage, LabelImage)> {
    image.same_dims(mask)?;
    if image.width() < g.width || image.height() < g.height {
        return Err(Error::CropTooLarge {
            src_w: image.width(),
            src_h: image.height(),
            crop_w: g.width,
            crop_h: g.height,
        });
    }
    let x0 = crop_offset(image.width(), g.width);
    Ok((image.crop(x0, 0, g.width, g.height)?, mask.crop(x0, 0, g.width, g.height)?))
}

/// `clamp((x − 0.5)·contrast + 0.5 + brightness, 0, 1)` per pixel.
pub fn apply_intensity(image: &GrayImage, brightness: f64, contrast: f64) -> GrayImage {
    image.map(|x| ((x as f64 - 0.5) * contrast + 0.5 + brightness).clamp(0.0, 1.0) as f32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManeuverRanges {
    /// ± degrees about the plane normal.
    pub rotation_deg: f64,
    /// ± degrees about the lateral axis.
    pub tilt_deg: f64,
    /// ± degrees about the axial axis.
    pub rock_deg: f64,
    /// Fractions of the volume extent along the matching axis; draws are
    /// uniform in ±fraction·extent/2.
    pub slide: f64,
    pub transversal_slide: f64,
    pub lift: f64,
    /// ± additive brightness.
    pub brightness: f64,
    /// Contrast factor drawn from 1 ± contrast.
    pub contrast: f64,
    pub hflip_probability: f64,
}

impl Default for ManeuverRanges {
    fn default() -> Self {
        Self {
            rotation_deg: 180.0,
            tilt_deg: 30.0,
            rock_deg: 12.0,
            slide: 0.8,
            transversal_slide: 0.4,
            lift: 0.15,
            brightness: 0.3,
            contrast: 0.3,
            hflip_probability: 0.5,
        }
    }
}

impl ManeuverRanges {
    pub fn zero() -> Self {
        Self {
            rotation_deg: 0.0,
            tilt_deg: 0.0,
            rock_deg: 0.0,
            slide: 0.0,
            transversal_slide: 0.0,
            lift: 0.0,
            brightness: 0.0,
            contrast: 0.0,
            hflip_probability: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let angles = [self.rotation_deg, self.tilt_deg, self.rock_deg];
        if angles.iter().any(|a| !(*a >= 0.0 && *a <= 180.0)) {
            return Err(Error::InvalidParameter(format!("maneuver angles must be in [0, 180], got {angles:?}")));
        }
        let fractions = [
            self.slide,
            self.transversal_slide,
            self.lift,
            self.brightness,
            self.contrast,
            self.hflip_probability,
        ];
        if fractions.iter().any(|f| !(*f >= 0.0 && *f <= 1.0)) {
            return Err(Error::InvalidParameter(format!("maneuver fractions must be in [0, 1], got {fractions:?}")));
        }
        Ok(())
    }
}

/// Physical context of a maneuver: extents of the volume along the base
/// plane axes (lateral, axial, elevational) and the rotation pivot in
/// plane-local mm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManeuverFrame {
    pub extent: [f64; 3],
    pub pivot: [f64; 3],
}

impl ManeuverFrame {
    pub fn new(grid: &Grid, base: &Pose, g: &ImageGeometry) -> Self {
        let c = g.center_local();
        Self {
            extent: std::array::from_fn(|a| grid.extent_along(&base.axis(a))),
            pivot: [c.x, c.y, c.z],
        }
    }
}

/// One concrete draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub rotation_deg: f64,
    pub tilt_deg: f64,
    pub rock_deg: f64,
    pub slide_mm: f64,
    pub transversal_slide_mm: f64,
    pub lift_mm: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub hflip: bool,
    /// Seed lineage: dataset seed, sample index, base-sweep frame and the
    /// number of draws made before the plane landed in the volume.
    pub seed: u64,
    pub index: u64,
    pub base_frame: usize,
    pub attempts: u32,
}

impl AugmentParams {
    pub fn within(&self, r: &ManeuverRanges, f: &ManeuverFrame) -> bool {
        let eps = 1e-9;
        let amp = |frac: f64, ext: f64| frac * ext / 2.0 + eps;
        self.rotation_deg.abs() <= r.rotation_deg + eps
            && self.tilt_deg.abs() <= r.tilt_deg + eps
            && self.rock_deg.abs() <= r.rock_deg + eps
            && self.transversal_slide_mm.abs() <= amp(r.transversal_slide, f.extent[0])
            && self.lift_mm.abs() <= amp(r.lift, f.extent[1])
            && self.slide_mm.abs() <= amp(r.slide, f.extent[2])
            && self.brightness.abs() <= r.brightness + eps
            && (self.contrast - 1.0).abs() <= r.contrast + eps
            && (!self.hflip || r.hflip_probability > 0.0)
    }

    /// Plane pose this draw produces from `base`.
    pub fn pose(&self, base: &Pose, frame: &ManeuverFrame) -> Pose {
        let pivot = Vector3::from(frame.pivot);
        base.compose(&Pose::from_translation(pivot))
            .compose(&Pose::from_translation(Vector3::new(
                self.transversal_slide_mm,
                self.lift_mm,
                self.slide_mm,
            )))
            .compose(&Pose::rot_y(self.rock_deg.to_radians()))
            .compose(&Pose::rot_x(self.tilt_deg.to_radians()))
            .compose(&Pose::rot_z(self.rotation_deg.to_radians()))
            .compose(&Pose::from_translation(-pivot))
    }
}

fn symmetric(rng: &mut rng::Rng, half: f64) -> f64 {
    if half > 0.0 {
        rng.random_range(-half..=half)
    } else {
        0.0
    }
}

/// Independent uniform draws within `ranges`; returns the maneuvered pose.
pub fn draw_maneuver(
    rng: &mut rng::Rng,
    ranges: &ManeuverRanges,
    base: &Pose,
    frame: &ManeuverFrame,
) -> (Pose, AugmentParams) {
    let params = AugmentParams {
        rotation_deg: symmetric(rng, ranges.rotation_deg),
        tilt_deg: symmetric(rng, ranges.tilt_deg),
        rock_deg: symmetric(rng, ranges.rock_deg),
        slide_mm: symmetric(rng, ranges.slide * frame.extent[2] / 2.0),
        transversal_slide_mm: symmetric(rng, ranges.transversal_slide * frame.extent[0] / 2.0),
        lift_mm: symmetric(rng, ranges.lift * frame.extent[1] / 2.0),
        brightness: symmetric(rng, ranges.brightness),
        contrast: 1.0 + symmetric(rng, ranges.contrast),
        hflip: ranges.hflip_probability > 0.0 && rng.random_bool(ranges.hflip_probability),
        seed: 0,
        index: 0,
        base_frame: 0,
        attempts: 1,
    };
    (params.pose(base, frame), params)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    pub image: GrayImage,
    pub mask: LabelImage,
    /// Pose of the (unflipped) crop plane.
    pub pose: Pose,
    pub params: AugmentParams,
}

impl SyntheticSample {
    pub fn validate(&self) -> Result<()> {
        self.image.same_dims(&self.mask)?;
        if self.image.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter("sample intensity outside [0, 1]".into()));
        }
        if self.mask.data().iter().any(|&l| l > 5) {
            return Err(Error::InvalidParameter("sample label outside 0..=5".into()));
        }
        Ok(())
    }

    pub fn hflipped(&self) -> Self {
        let mut s = self.clone();
        s.image = self.image.hflip();
        s.mask = self.mask.hflip();
        s.params.hflip = !self.params.hflip;
        s
    }

    /// Pixel → world mapping of the stored (possibly flipped) image.
    pub fn mapping(&self, g: &ImageGeometry) -> PlaneMapping {
        let m = PlaneMapping::new(self.pose, g);
        if self.params.hflip {
            m.hflipped(g.width)
        } else {
            m
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub ranges: ManeuverRanges,
    pub count: usize,
    pub seed: u64,
    /// Full probe frame swept over the volume to produce base poses.
    pub frame: ImageGeometry,
    /// Central crop stored per sample.
    pub crop: ImageGeometry,
    /// Distance between base-sweep planes, mm.
    pub base_pitch: f64,
    pub interpolation: Interpolation,
    /// Minimum fraction of crop pixels inside the volume; draws below it are
    /// redrawn.
    pub min_inside: f64,
    pub max_attempts: u32,
}

impl DatasetSpec {
    pub fn new(count: usize, seed: u64, frame: ImageGeometry, crop: ImageGeometry) -> Self {
        Self {
            ranges: ManeuverRanges::default(),
            count,
            seed,
            frame,
            crop,
            base_pitch: 1.0,
            interpolation: Interpolation::Cubic,
            min_inside: 0.5,
            max_attempts: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ranges.validate()?;
        if self.count == 0 {
            return Err(Error::InvalidParameter("dataset needs at least one sample".into()));
        }
        if self.crop.width > self.frame.width || self.crop.height > self.frame.height {
            return Err(Error::CropTooLarge {
                src_w: self.frame.width,
                src_h: self.frame.height,
                crop_w: self.crop.width,
                crop_h: self.crop.height,
            });
        }
        if self.crop.spacing != self.frame.spacing {
            return Err(Error::InvalidGeometry("crop and frame spacing differ".into()));
        }
        if !(self.min_inside >= 0.0 && self.min_inside <= 1.0) || self.max_attempts == 0 || !(self.base_pitch > 0.0) {
            return Err(Error::InvalidParameter("invalid dataset sampling settings".into()));
        }
        Ok(())
    }
}

/// Deterministic sample source: sample `i` depends only on `(seed, i)`.
pub struct DatasetGenerator<'a> {
    vol: &'a Volume<f32>,
    labels: &'a Volume<u8>,
    spec: DatasetSpec,
    /// Crop-plane poses of the base sweep with their maneuver frames.
    bases: Vec<(Pose, ManeuverFrame)>,
}

impl<'a> DatasetGenerator<'a> {
    pub fn new(vol: &'a Volume<f32>, labels: &'a Volume<u8>, spec: DatasetSpec) -> Result<Self> {
        spec.validate()?;
        let grid = vol.grid();
        let lateral = grid.extent_along(&Vector3::x());
        let axial = grid.extent_along(&Vector3::y());
        if (spec.crop.width as f64) * spec.crop.spacing > lateral || (spec.crop.height as f64) * spec.crop.spacing > axial + 1e-9 {
            return Err(Error::CropTooLarge {
                src_w: (lateral / spec.crop.spacing) as usize,
                src_h: (axial / spec.crop.spacing) as usize,
                crop_w: spec.crop.width,
                crop_h: spec.crop.height,
            });
        }
        let plan = SweepPlan::straight(spec.base_pitch);
        let x0 = crop_offset(spec.frame.width, spec.crop.width) as f64 * spec.frame.spacing;
        let bases = transverse_sweep(grid, &spec.frame, &plan)
            .into_iter()
            .map(|p| {
                let pose = p.compose(&Pose::from_translation(Vector3::new(x0, 0.0, 0.0)));
                (pose, ManeuverFrame::new(grid, &pose, &spec.crop))
            })
            .collect::<Vec<_>>();
        Ok(Self {
            vol,
            labels,
            spec,
            bases,
        })
    }

    pub fn spec(&self) -> &DatasetSpec {
        &self.spec
    }

    pub fn base_poses(&self) -> &[(Pose, ManeuverFrame)] {
        &self.bases
    }

    pub fn len(&self) -> usize {
        self.spec.count
    }

    pub fn is_empty(&self) -> bool {
        self.spec.count == 0
    }

    pub fn sample(&self, index: usize) -> Result<SyntheticSample> {
        let g = &self.spec.crop;
        let mut rng = rng::stream(self.spec.seed, streams::AUGMENT, index as u64);
        let need = (self.spec.min_inside * g.pixel_count() as f64).ceil() as usize;
        for attempt in 1..=self.spec.max_attempts {
            let base_frame = rng.random_range(0..self.bases.len());
            let (base, frame) = &self.bases[base_frame];
            let (pose, mut params) = draw_maneuver(&mut rng, &self.spec.ranges, base, frame);
            let mapping = PlaneMapping::new(pose, g);
            let (img, inside) = resample_intensity(self.vol, &mapping, g.width, g.height, self.spec.interpolation);
            if inside == 0 || inside < need {
                continue;
            }
            params.seed = self.spec.seed;
            params.index = index as u64;
            params.base_frame = base_frame;
            params.attempts = attempt;
            let mask = resample_labels(self.labels, &mapping, g.width, g.height);
            let img = apply_intensity(&img, params.brightness, params.contrast);
            let (image, mask) = if params.hflip { (img.hflip(), mask.hflip()) } else { (img, mask) };
            return Ok(SyntheticSample {
                image,
                mask,
                pose,
                params,
            });
        }
        Err(Error::PlaneMissesVolume)
    }

    /// Samples `range` in parallel, in index order.
    pub fn samples(&self, range: std::ops::Range<usize>) -> Result<Vec<SyntheticSample>> {
        range.into_par_iter().map(|i| self.sample(i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub samples: usize,
    pub labeled_fraction: f64,
    pub mean_attempts: f64,
    pub seconds: f64,
    pub samples_per_second: f64,
}

/// Generates every sample of `spec` in memory, with throughput stats.
pub fn generate_dataset(
    vol: &Volume<f32>,
    labels: &Volume<u8>,
    spec: DatasetSpec,
) -> Result<(Vec<SyntheticSample>, DatasetStats)> {
    let t0 = Instant::now();
    let gen = DatasetGenerator::new(vol, labels, spec)?;
    let samples = gen.samples(0..gen.len())?;
    let seconds = t0.elapsed().as_secs_f64();
    let stats = dataset_stats(&samples, seconds);
    Ok((samples, stats))
}

pub fn dataset_stats(samples: &[SyntheticSample], seconds: f64) -> DatasetStats {
    let n = samples.len().max(1) as f64;
    let labeled = samples.iter().filter(|s| s.mask.data().iter().any(|&l| l != 0)).count();
    DatasetStats {
        samples: samples.len(),
        labeled_fraction: labeled as f64 / n,
        mean_attempts: samples.iter().map(|s| s.params.attempts as f64).sum::<f64>() / n,
        seconds,
        samples_per_second: samples.len() as f64 / seconds.max(1e-12),
    }
}
