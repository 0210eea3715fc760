//! Freehand volume reconstruction: trilinear splatting of tracked frames,
//! weighted-average compounding and Gaussian hole filling.
//!
//! Accumulation is done in 2⁻⁸⁰ fixed point (`i128`). Integer addition is
//! associative, so the accumulated sums do not depend on frame order or on
//! how frames are distributed across worker threads.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{ImageGeometry, PlaneMapping, Pose};
use crate::image::Image;
use crate::phantom::TrackedSequence;
use crate::volume::{Grid, Volume};
use crate::{Error, Result};

const FIXED_SCALE: f64 = (1u128 << 80) as f64;

/// Minimum number of known voxels the growing kernel must reach.
pub const MIN_KNOWN: usize = 4;

#[inline]
fn to_fixed(v: f64) -> i128 {
    (v * FIXED_SCALE).round() as i128
}

/// The 8 voxels around continuous index `idx` with their trilinear weights,
/// or `None` when `idx` falls outside the voxel-centre hull.
#[inline]
pub fn trilinear_weights(grid: &Grid, idx: &Vector3<f64>) -> Option<[(usize, f64); 8]> {
    let mut base = [0usize; 3];
    let mut t = [0.0f64; 3];
    for a in 0..3 {
        let n = grid.dims[a];
        let c = idx[a];
        if !(c >= 0.0 && c <= (n - 1) as f64) {
            return None;
        }
        if n == 1 {
            base[a] = 0;
            t[a] = 0.0;
            continue;
        }
        let b = (c.floor() as usize).min(n - 2);
        base[a] = b;
        t[a] = c - b as f64;
    }
    let step = [
        if grid.dims[0] > 1 { 1 } else { 0 },
        if grid.dims[1] > 1 { 1 } else { 0 },
        if grid.dims[2] > 1 { 1 } else { 0 },
    ];
    let mut out = [(0usize, 0.0f64); 8];
    for (n, slot) in out.iter_mut().enumerate() {
        let (dx, dy, dz) = (n & 1, (n >> 1) & 1, (n >> 2) & 1);
        let w = (if dx == 1 { t[0] } else { 1.0 - t[0] })
            * (if dy == 1 { t[1] } else { 1.0 - t[1] })
            * (if dz == 1 { t[2] } else { 1.0 - t[2] });
        *slot = (
            grid.linear(base[0] + dx * step[0], base[1] + dy * step[1], base[2] + dz * step[2]),
            w,
        );
    }
    Some(out)
}

/// Weighted value and weight sums on the output grid.
#[derive(Clone, Debug)]
pub struct Accumulator {
    grid: Grid,
    value: Vec<i128>,
    weight: Vec<i128>,
    /// Pixels that landed inside the grid.
    pub splatted: usize,
    /// Pixels skipped because they mapped outside the grid.
    pub skipped: usize,
}

impl Accumulator {
    pub fn new(grid: Grid) -> Self {
        Self {
            value: vec![0; grid.len()],
            weight: vec![0; grid.len()],
            grid,
            splatted: 0,
            skipped: 0,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weight_sum(&self, idx: usize) -> f64 {
        self.weight[idx] as f64 / FIXED_SCALE
    }

    pub fn value_sum(&self, idx: usize) -> f64 {
        self.value[idx] as f64 / FIXED_SCALE
    }

    /// Total weight over the grid.
    pub fn total_weight(&self) -> f64 {
        self.weight.iter().sum::<i128>() as f64 / FIXED_SCALE
    }

    /// Exact accumulator state, for bitwise comparisons.
    pub fn raw(&self) -> (&[i128], &[i128]) {
        (&self.value, &self.weight)
    }

    /// Distributes every pixel of `image` over its 8 surrounding voxels.
    pub fn splat_frame(&mut self, image: &Image<f32>, pose: &Pose, g: &ImageGeometry) {
        let mapping = PlaneMapping::new(*pose, g);
        let grid = self.grid;
        for_each_pixel_index(&grid, &mapping, image.width(), image.height(), |px, idx| {
            match trilinear_weights(&grid, idx) {
                Some(taps) => {
                    let v = image.data()[px] as f64;
                    for (vox, w) in taps {
                        let qw = to_fixed(w);
                        if qw == 0 {
                            continue;
                        }
                        self.weight[vox] += qw;
                        self.value[vox] += to_fixed(w * v);
                    }
                    self.splatted += 1;
                }
                None => self.skipped += 1,
            }
        });
    }

    pub fn merge(&mut self, other: &Accumulator) {
        assert_eq!(self.grid, other.grid, "merging accumulators on different grids");
        for (a, b) in self.value.iter_mut().zip(&other.value) {
            *a += b;
        }
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += b;
        }
        self.splatted += other.splatted;
        self.skipped += other.skipped;
    }

    /// Weighted average per voxel; voxels with zero weight are unknown (0).
    pub fn compound(&self) -> (Volume<f32>, Volume<u8>) {
        let (vals, known): (Vec<f32>, Vec<u8>) = self
            .value
            .par_iter()
            .zip(&self.weight)
            .map(|(&v, &w)| {
                if w > 0 {
                    ((v as f64 / w as f64) as f32, 1)
                } else {
                    (0.0, 0)
                }
            })
            .unzip();
        (
            Volume::from_vec(self.grid, vals).expect("grid sized"),
            Volume::from_vec(self.grid, known).expect("grid sized"),
        )
    }
}

/// Calls `f(pixel index, continuous voxel index)` for every pixel of a
/// `width × height` image placed by `mapping`.
fn for_each_pixel_index(
    grid: &Grid,
    mapping: &PlaneMapping,
    width: usize,
    height: usize,
    mut f: impl FnMut(usize, &Vector3<f64>),
) {
    let origin = grid.world_to_index(&mapping.to_world(0.0, 0.0));
    let du = grid.world_to_index(&mapping.to_world(1.0, 0.0)) - origin;
    let dv = grid.world_to_index(&mapping.to_world(0.0, 1.0)) - origin;
    for v in 0..height {
        let row = origin + dv * v as f64;
        for u in 0..width {
            let idx = row + du * u as f64;
            f(v * width + u, &idx);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Bounds {
    /// Axis-aligned box of all frame corners padded by two voxels, snapped to
    /// multiples of the spacing.
    Auto,
    Explicit { grid: Grid },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconSpec {
    /// Output voxel size, mm.
    pub spacing: f64,
    pub bounds: Bounds,
    pub fill_holes: bool,
    /// Largest hole-filling kernel radius, voxels.
    pub max_kernel_radius: usize,
}

impl Default for ReconSpec {
    fn default() -> Self {
        Self {
            spacing: 0.5,
            bounds: Bounds::Auto,
            fill_holes: true,
            max_kernel_radius: 4,
        }
    }
}

impl ReconSpec {
    /// Output volume of the published protocol: 550×450×150 voxels at 0.5 mm.
    pub fn paper() -> Self {
        Self {
            bounds: Bounds::Explicit {
                grid: Grid::new([550, 450, 150], 0.5, [0.0; 3]),
            },
            ..Self::default()
        }
    }

    pub fn on_grid(grid: Grid) -> Self {
        Self {
            spacing: grid.spacing[0],
            bounds: Bounds::Explicit { grid },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "reconstruction spacing must be > 0, got {}",
                self.spacing
            )));
        }
        if self.max_kernel_radius < 1 {
            return Err(Error::InvalidParameter("max kernel radius must be ≥ 1".into()));
        }
        if let Bounds::Explicit { grid } = &self.bounds {
            grid.validate()?;
        }
        Ok(())
    }

    /// Output grid for a sequence.
    pub fn grid_for(&self, seq: &TrackedSequence) -> Result<Grid> {
        match &self.bounds {
            Bounds::Explicit { grid } => Ok(*grid),
            Bounds::Auto => auto_bounds(seq, self.spacing),
        }
    }
}

fn auto_bounds(seq: &TrackedSequence, spacing: f64) -> Result<Grid> {
    if seq.is_empty() {
        return Err(Error::EmptyReconstruction);
    }
    let g = &seq.geometry;
    let (w, h) = ((g.width - 1) as f64, (g.height - 1) as f64);
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for i in 0..seq.len() {
        let m = PlaneMapping::new(seq.image_pose(i), g);
        for (u, v) in [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)] {
            let p = m.to_world(u, v);
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
    }
    let origin = lo.map(|c| (c / spacing).floor() * spacing - 2.0 * spacing);
    let dims: [usize; 3] = std::array::from_fn(|a| ((hi[a] - origin[a]) / spacing).ceil() as usize + 3);
    Ok(Grid::new(dims, spacing, [origin.x, origin.y, origin.z]))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FillStats {
    pub unknown_before: usize,
    pub filled: usize,
    pub unknown_after: usize,
}

/// Fills unknown voxels from known neighbours with a growing spherical
/// Gaussian kernel: the smallest radius `r ≤ max_radius` holding at least
/// [`MIN_KNOWN`] known voxels is used with `σ = r/2`. If no radius reaches
/// that count, the largest radius is used with whatever it holds; voxels with
/// no known voxel in reach stay unknown. Known voxels are never modified.
pub fn fill_holes(
    vol: &Volume<f32>,
    known: &Volume<u8>,
    max_radius: usize,
) -> Result<(Volume<f32>, Volume<u8>, FillStats)> {
    vol.same_grid(known)?;
    if max_radius < 1 {
        return Err(Error::InvalidParameter("max kernel radius must be ≥ 1".into()));
    }
    if !known.data().iter().any(|&k| k != 0) {
        return Err(Error::NoKnownVoxels);
    }
    let grid = *vol.grid();
    let offsets = sphere_offsets(max_radius);
    let unknown: Vec<usize> = known
        .data()
        .iter()
        .enumerate()
        .filter_map(|(i, &k)| (k == 0).then_some(i))
        .collect();
    let filled: Vec<Option<f32>> = unknown
        .par_iter()
        .map(|&idx| fill_one(vol, known, &grid, idx, &offsets, max_radius))
        .collect();
    let mut out = vol.clone();
    let mut mask = known.clone();
    let mut stats = FillStats {
        unknown_before: unknown.len(),
        ..Default::default()
    };
    for (&idx, v) in unknown.iter().zip(filled) {
        if let Some(v) = v {
            out.data_mut()[idx] = v;
            mask.data_mut()[idx] = 1;
            stats.filled += 1;
        }
    }
    stats.unknown_after = stats.unknown_before - stats.filled;
    Ok((out, mask, stats))
}

/// Integer offsets within `max_radius`, sorted by distance, with squared length.
fn sphere_offsets(max_radius: usize) -> Vec<([i64; 3], i64)> {
    let r = max_radius as i64;
    let mut v = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                let d2 = dx * dx + dy * dy + dz * dz;
                if d2 > 0 && d2 <= r * r {
                    v.push(([dx, dy, dz], d2));
                }
            }
        }
    }
    v.sort_by_key(|&(o, d2)| (d2, o));
    v
}

fn fill_one(
    vol: &Volume<f32>,
    known: &Volume<u8>,
    grid: &Grid,
    idx: usize,
    offsets: &[([i64; 3], i64)],
    max_radius: usize,
) -> Option<f32> {
    let [i, j, k] = grid.unlinear(idx);
    let centre = [i as i64, j as i64, k as i64];
    let mut neighbours: Vec<(f64, i64)> = Vec::new();
    for &(o, d2) in offsets {
        let p: [i64; 3] = std::array::from_fn(|a| centre[a] + o[a]);
        if (0..3).any(|a| p[a] < 0 || p[a] >= grid.dims[a] as i64) {
            continue;
        }
        let n = grid.linear(p[0] as usize, p[1] as usize, p[2] as usize);
        if known.data()[n] != 0 {
            neighbours.push((vol.data()[n] as f64, d2));
        }
    }
    if neighbours.is_empty() {
        return None;
    }
    // neighbours are in non-decreasing distance order
    let radius = (1..=max_radius as i64)
        .find(|r| neighbours.iter().take_while(|n| n.1 <= r * r).count() >= MIN_KNOWN)
        .unwrap_or(max_radius as i64);
    let sigma = radius as f64 / 2.0;
    let (mut num, mut den) = (0.0, 0.0);
    for &(v, d2) in neighbours.iter().take_while(|n| n.1 <= radius * radius) {
        let w = (-(d2 as f64) / (2.0 * sigma * sigma)).exp();
        num += w * v;
        den += w;
    }
    (den > 0.0).then(|| (num / den) as f32)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReconStats {
    pub frames: usize,
    pub pixels_splatted: usize,
    pub pixels_skipped: usize,
    pub known_voxels: usize,
    pub fill: Option<FillStats>,
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub volume: Volume<f32>,
    /// 1 where the voxel received weight or was filled.
    pub known: Volume<u8>,
    /// 1 where the voxel received splatting weight.
    pub splat_known: Volume<u8>,
    pub stats: ReconStats,
}

/// Frames per splatting work unit. Fixed, so the work decomposition does not
/// depend on the number of threads.
const FRAMES_PER_CHUNK: usize = 16;

/// Splats every frame, compounds, and optionally fills holes.
pub fn reconstruct(seq: &TrackedSequence, spec: &ReconSpec) -> Result<Reconstruction> {
    spec.validate()?;
    if seq.is_empty() {
        return Err(Error::EmptyReconstruction);
    }
    let grid = spec.grid_for(seq)?;
    let poses = seq.image_poses();
    let indices: Vec<usize> = (0..seq.len()).collect();
    let acc = indices
        .par_chunks(FRAMES_PER_CHUNK)
        .map(|chunk| {
            let mut acc = Accumulator::new(grid);
            for &i in chunk {
                acc.splat_frame(&seq.frames[i].image, &poses[i], &seq.geometry);
            }
            acc
        })
        .reduce_with(|mut a, b| {
            a.merge(&b);
            a
        })
        .expect("non-empty sequence");
    if acc.splatted == 0 {
        return Err(Error::EmptyReconstruction);
    }
    let (volume, splat_known) = acc.compound();
    let mut stats = ReconStats {
        frames: seq.len(),
        pixels_splatted: acc.splatted,
        pixels_skipped: acc.skipped,
        known_voxels: splat_known.data().iter().filter(|&&k| k != 0).count(),
        fill: None,
    };
    let (volume, known) = if spec.fill_holes {
        let (v, k, fill) = fill_holes(&volume, &splat_known, spec.max_kernel_radius)?;
        stats.fill = Some(fill);
        (v, k)
    } else {
        (volume, splat_known.clone())
    };
    Ok(Reconstruction {
        volume,
        known,
        splat_known,
        stats,
    })
}

/// Compounds per-frame label masks into a label volume: each class is
/// splatted as a one-hot channel and every touched voxel takes the class with
/// the largest accumulated weight (ties → smaller label). Untouched voxels
/// are background.
pub fn compound_labels(
    masks: &[(Image<u8>, PlaneMapping)],
    grid: Grid,
    classes: usize,
) -> Volume<u8> {
    let mut acc = vec![0.0f64; grid.len() * classes];
    for (mask, mapping) in masks {
        for_each_pixel_index(&grid, mapping, mask.width(), mask.height(), |px, idx| {
            if let Some(taps) = trilinear_weights(&grid, idx) {
                let c = (mask.data()[px] as usize).min(classes - 1);
                for (vox, w) in taps {
                    acc[vox * classes + c] += w;
                }
            }
        });
    }
    let labels = acc
        .chunks(classes)
        .map(|ch| {
            let mut best = 0usize;
            for (c, &w) in ch.iter().enumerate() {
                if w > ch[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    Volume::from_vec(grid, labels).expect("grid sized")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::TrackedFrame;
    use proptest::prelude::*;

    fn grid() -> Grid {
        Grid::new([8, 8, 8], 1.0, [0.0; 3])
    }

    #[test]
    fn weights_on_centre_and_cell_middle() {
        let g = grid();
        let taps = trilinear_weights(&g, &Vector3::new(3.0, 4.0, 5.0)).unwrap();
        let centre = g.linear(3, 4, 5);
        for (vox, w) in taps {
            assert_eq!(w, if vox == centre { 1.0 } else { 0.0 });
        }
        let taps = trilinear_weights(&g, &Vector3::new(3.5, 4.5, 5.5)).unwrap();
        assert!(taps.iter().all(|&(_, w)| w == 0.125));
        // the last voxel centre is reachable
        let taps = trilinear_weights(&g, &Vector3::new(7.0, 7.0, 7.0)).unwrap();
        assert!(taps.iter().any(|&(v, w)| v == g.linear(7, 7, 7) && w == 1.0));
        assert!(trilinear_weights(&g, &Vector3::new(7.01, 0.0, 0.0)).is_none());
    }

    proptest! {
        #[test]
        fn weights_partition_unity(x in 0.0f64..7.0, y in 0.0f64..7.0, z in 0.0f64..7.0) {
            let taps = trilinear_weights(&grid(), &Vector3::new(x, y, z)).unwrap();
            let s: f64 = taps.iter().map(|t| t.1).sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(taps.iter().all(|t| t.1 >= 0.0));
        }
    }

    fn frame_at(z: f64, value: f32, g: &ImageGeometry) -> (Image<f32>, Pose) {
        (
            Image::filled(g.width, g.height, value),
            Pose::from_translation(Vector3::new(0.0, 0.0, z)),
        )
    }

    #[test]
    fn coinciding_pixels_average() {
        let g = ImageGeometry::new(8, 8, 1.0).unwrap();
        let mut acc = Accumulator::new(grid());
        for v in [0.2f32, 0.8] {
            let (img, pose) = frame_at(3.0, v, &g);
            acc.splat_frame(&img, &pose, &g);
        }
        let (vol, known) = acc.compound();
        assert!((vol.get(2, 2, 3) - 0.5).abs() < 1e-7);
        assert_eq!(known.get(2, 2, 3), 1);
        assert_eq!(known.get(2, 2, 4), 0);
        assert_eq!(vol.get(2, 2, 4), 0.0);
        assert!((acc.total_weight() - 128.0).abs() < 1e-6);
    }

    #[test]
    fn mass_conserved_and_skips_counted() {
        let g = ImageGeometry::new(12, 6, 0.7).unwrap();
        let mut acc = Accumulator::new(grid());
        let pose = Pose::from_translation(Vector3::new(0.3, 0.2, 2.4)).compose(&Pose::rot_x(0.3));
        acc.splat_frame(&Image::filled(12, 6, 1.0), &pose, &g);
        assert!(acc.skipped > 0);
        assert_eq!(acc.splatted + acc.skipped, 72);
        assert!((acc.total_weight() - acc.splatted as f64).abs() < 1e-6);
    }

    #[test]
    fn order_does_not_change_sums() {
        let g = ImageGeometry::new(10, 10, 0.6).unwrap();
        let frames: Vec<(Image<f32>, Pose)> = (0..6)
            .map(|i| {
                let img = Image::from_fn(10, 10, |x, y| ((x * 7 + y * 3 + i) % 11) as f32 / 11.0);
                let pose = Pose::from_translation(Vector3::new(0.1 * i as f64, 0.3, 1.0 + 0.77 * i as f64))
                    .compose(&Pose::rot_y(0.05 * i as f64));
                (img, pose)
            })
            .collect();
        let mut fwd = Accumulator::new(grid());
        for (img, p) in &frames {
            fwd.splat_frame(img, p, &g);
        }
        let mut rev = Accumulator::new(grid());
        for (img, p) in frames.iter().rev() {
            rev.splat_frame(img, p, &g);
        }
        assert_eq!(fwd.raw(), rev.raw());
    }

    #[test]
    fn fill_constant_neighbourhood() {
        let g = grid();
        let mut vol = Volume::filled(g, 0.37f32);
        let mut known = Volume::filled(g, 1u8);
        vol.set(4, 4, 4, 0.0);
        known.set(4, 4, 4, 0);
        let (out, mask, stats) = fill_holes(&vol, &known, 3).unwrap();
        assert!((out.get(4, 4, 4) as f64 - 0.37f32 as f64).abs() < 1e-9);
        assert_eq!(mask.get(4, 4, 4), 1);
        assert_eq!(stats.filled, 1);
    }

    #[test]
    fn fill_symmetric_midpoint() {
        // known 0 on x ≤ 3, known 1 on x ≥ 5, one unknown plane at x = 4
        let g = Grid::new([9, 9, 9], 1.0, [0.0; 3]);
        let mut vol = Volume::filled(g, 0.0f32);
        let mut known = Volume::filled(g, 1u8);
        for idx in 0..g.len() {
            let [i, _, _] = g.unlinear(idx);
            if i >= 5 {
                vol.data_mut()[idx] = 1.0;
            }
            if i == 4 {
                known.data_mut()[idx] = 0;
            }
        }
        let (out, _, _) = fill_holes(&vol, &known, 3).unwrap();
        assert!((out.get(4, 4, 4) - 0.5).abs() < 1e-6);
        // known voxels untouched
        assert_eq!(out.get(2, 4, 4), 0.0);
        assert_eq!(out.get(6, 4, 4), 1.0);
    }

    #[test]
    fn fill_leaves_unreachable_and_rejects_empty() {
        let g = Grid::new([20, 3, 3], 1.0, [0.0; 3]);
        let vol = Volume::filled(g, 0.5f32);
        let mut known = Volume::filled(g, 0u8);
        known.set(0, 1, 1, 1);
        let (_, mask, stats) = fill_holes(&vol, &known, 2).unwrap();
        assert_eq!(mask.get(19, 1, 1), 0);
        assert!(stats.unknown_after > 0);
        let none = Volume::filled(g, 0u8);
        assert!(matches!(fill_holes(&vol, &none, 2), Err(Error::NoKnownVoxels)));
    }

    #[test]
    fn single_frame_support_is_local() {
        let g = ImageGeometry::new(6, 6, 1.0).unwrap();
        let seq = TrackedSequence {
            geometry: g,
            calibration: Pose::identity(),
            frames: vec![TrackedFrame {
                timestamp: 0.0,
                pose: Pose::from_translation(Vector3::new(0.0, 0.0, 3.25)),
                image: Image::filled(6, 6, 0.4),
            }],
        };
        let spec = ReconSpec {
            spacing: 1.0,
            bounds: Bounds::Explicit { grid: grid() },
            fill_holes: false,
            max_kernel_radius: 2,
        };
        let r = reconstruct(&seq, &spec).unwrap();
        for idx in 0..grid().len() {
            let [_, _, k] = grid().unlinear(idx);
            let expect = u8::from(k == 3 || k == 4);
            let [i, j, _] = grid().unlinear(idx);
            if i < 6 && j < 6 {
                assert_eq!(r.splat_known.data()[idx], expect);
            } else {
                assert_eq!(r.splat_known.data()[idx], 0);
            }
        }
        // pushing frames entirely out of bounds is an error
        let mut far = seq.clone();
        far.frames[0].pose = Pose::from_translation(Vector3::new(0.0, 0.0, 100.0));
        assert!(matches!(reconstruct(&far, &spec), Err(Error::EmptyReconstruction)));
    }

    #[test]
    fn auto_bounds_cover_frames() {
        let g = ImageGeometry::new(10, 8, 0.5).unwrap();
        let seq = TrackedSequence {
            geometry: g,
            calibration: Pose::identity(),
            frames: (0..4)
                .map(|i| TrackedFrame {
                    timestamp: i as f64,
                    pose: Pose::from_translation(Vector3::new(1.3, -0.2, i as f64)),
                    image: Image::filled(10, 8, 0.5),
                })
                .collect(),
        };
        let r = reconstruct(&seq, &ReconSpec::default()).unwrap();
        assert_eq!(r.stats.pixels_skipped, 0);
        let o = r.volume.grid().origin;
        assert!(o.iter().all(|c| (c / 0.5 - (c / 0.5).round()).abs() < 1e-9));
    }

    #[test]
    fn paper_preset_grid() {
        let spec = ReconSpec::paper();
        match spec.bounds {
            Bounds::Explicit { grid } => {
                assert_eq!(grid.dims, [550, 450, 150]);
                assert_eq!(grid.spacing, [0.5; 3]);
            }
            _ => panic!("paper preset must pin the grid"),
        }
    }
}
