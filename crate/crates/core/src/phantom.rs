//! Procedural liver phantom: a five-branch portal tree rasterised into a
//! label volume, a speckled parenchyma intensity volume, and simulated
//! tracked linear-probe sweeps over it.

use nalgebra::Vector3;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{ImageGeometry, Pose};
use crate::image::GrayImage;
use crate::interp::{self, Interpolation};
use crate::rng::{self, streams};
use crate::volume::{Grid, Volume};
use crate::{Error, Result};

/// Portal tree labels. `Background` is reserved for unlabeled tissue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum BranchId {
    Background = 0,
    Mpv = 1,
    Rlpv = 2,
    Rmpv = 3,
    Lmpv = 4,
    Llpv = 5,
}

impl BranchId {
    pub const COUNT: usize = 6;
    pub const ALL: [BranchId; 6] = [
        BranchId::Background,
        BranchId::Mpv,
        BranchId::Rlpv,
        BranchId::Rmpv,
        BranchId::Lmpv,
        BranchId::Llpv,
    ];
    pub const LABELED: [BranchId; 5] = [
        BranchId::Mpv,
        BranchId::Rlpv,
        BranchId::Rmpv,
        BranchId::Lmpv,
        BranchId::Llpv,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            BranchId::Background => "Background",
            BranchId::Mpv => "MPV",
            BranchId::Rlpv => "RLPV",
            BranchId::Rmpv => "RMPV",
            BranchId::Lmpv => "LMPV",
            BranchId::Llpv => "LLPV",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            BranchId::Background => "background",
            BranchId::Mpv => "main portal vein",
            BranchId::Rlpv => "right lateral portal vein",
            BranchId::Rmpv => "right medial portal vein",
            BranchId::Lmpv => "left medial portal vein",
            BranchId::Llpv => "left lateral portal vein",
        }
    }
}

impl std::fmt::Display for BranchId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: BranchId,
    pub parent: Option<BranchId>,
    /// Centreline vertices in world mm.
    pub centerline: Vec<[f64; 3]>,
    /// Lumen radius at each vertex, mm.
    pub radii: Vec<f64>,
}

impl Branch {
    fn vertex(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.centerline[i])
    }

    pub fn length(&self) -> f64 {
        (1..self.centerline.len())
            .map(|i| (self.vertex(i) - self.vertex(i - 1)).norm())
            .sum()
    }

    /// Distance from `p` to the centreline and the interpolated radius at the
    /// closest point.
    pub fn distance(&self, p: &Vector3<f64>) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        for s in 1..self.centerline.len() {
            let (d, r) = segment_distance(
                p,
                &self.vertex(s - 1),
                &self.vertex(s),
                self.radii[s - 1],
                self.radii[s],
            );
            if d < best.0 {
                best = (d, r);
            }
        }
        best
    }

    /// True when `p` lies on the centreline polyline (within `tol` mm).
    pub fn on_centerline(&self, p: &Vector3<f64>, tol: f64) -> bool {
        self.distance(p).0 <= tol
    }
}

fn segment_distance(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    ra: f64,
    rb: f64,
) -> (f64, f64) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = a + ab * t;
    ((p - q).norm(), ra + (rb - ra) * t)
}

/// Unlabeled vessel too small to be annotated (diameter ≤ 2 mm).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallVessel {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VesselTree {
    pub branches: Vec<Branch>,
    pub small_vessels: Vec<SmallVessel>,
}

impl VesselTree {
    pub fn branch(&self, id: BranchId) -> Option<&Branch> {
        self.branches.iter().find(|b| b.id == id)
    }

    /// Checks labeling, radius and attachment invariants.
    pub fn validate(&self) -> Result<()> {
        let ids: Vec<BranchId> = self.branches.iter().map(|b| b.id).collect();
        if ids != BranchId::LABELED {
            return Err(Error::InvalidPhantom(format!("unexpected branch set {ids:?}")));
        }
        for b in &self.branches {
            if b.centerline.len() < 2 || b.centerline.len() != b.radii.len() {
                return Err(Error::InvalidPhantom(format!("{} has a degenerate centreline", b.id)));
            }
            if b.radii.iter().any(|&r| !(r > 1.0)) {
                return Err(Error::InvalidPhantom(format!(
                    "{} has a radius at or below 1 mm (diameter ≤ 2 mm vessels are unlabeled)",
                    b.id
                )));
            }
            match (b.id, b.parent) {
                (BranchId::Mpv, None) => {}
                (BranchId::Mpv, Some(_)) => {
                    return Err(Error::InvalidPhantom("MPV must be the root".into()))
                }
                (_, None) => {
                    return Err(Error::InvalidPhantom(format!("{} is detached", b.id)))
                }
                (_, Some(parent)) => {
                    let p = self
                        .branch(parent)
                        .ok_or_else(|| Error::InvalidPhantom(format!("missing parent {parent}")))?;
                    if !p.on_centerline(&b.vertex(0), 1e-6) {
                        return Err(Error::InvalidPhantom(format!(
                            "{} does not start on {}'s centreline",
                            b.id, parent
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Parameters of the procedural phantom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    /// Isotropic voxel size, mm.
    pub spacing: f64,
    pub seed: u64,
    /// Mean parenchyma echogenicity before attenuation.
    pub parenchyma_mean: f32,
    /// Mean lumen echogenicity (capped at [`LUMEN_MAX`]).
    pub lumen_mean: f32,
    /// Log-normal speckle shape: log-intensity standard deviation.
    pub speckle_sigma: f64,
    /// Gaussian correlation length of the speckle field, voxels.
    pub speckle_correlation: f64,
    /// Depth attenuation coefficient, 1/mm, applied along the volume y axis.
    pub attenuation_per_mm: f64,
    /// Lumen radius range of labeled branches, mm.
    pub radius_range: [f64; 2],
    /// Range for the number of small unlabeled vessels.
    pub small_vessel_count: [usize; 2],
}

pub const LUMEN_MAX: f32 = 0.15;

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            dims: [128, 128, 96],
            spacing: 0.5,
            seed: 0,
            parenchyma_mean: 0.62,
            lumen_mean: 0.07,
            speckle_sigma: 0.3,
            speckle_correlation: 1.5,
            attenuation_per_mm: 0.005,
            radius_range: [2.5, 4.0],
            small_vessel_count: [4, 8],
        }
    }
}

impl PhantomSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.dims, self.spacing, [0.0; 3])
    }

    pub fn extent(&self) -> Vector3<f64> {
        Vector3::new(
            (self.dims[0] - 1) as f64 * self.spacing,
            (self.dims[1] - 1) as f64 * self.spacing,
            (self.dims[2] - 1) as f64 * self.spacing,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 32) {
            return Err(Error::InvalidPhantom(format!(
                "dims {:?} below the 32³ minimum",
                self.dims
            )));
        }
        if !(self.spacing > 0.0) {
            return Err(Error::InvalidPhantom(format!("spacing {} must be > 0", self.spacing)));
        }
        let [rmin, rmax] = self.radius_range;
        if !(rmin > 2.0 && rmax >= rmin) {
            return Err(Error::InvalidPhantom(format!(
                "radius range {:?} must satisfy 2 < min ≤ max",
                self.radius_range
            )));
        }
        if !(0.0..=1.0).contains(&self.parenchyma_mean) || !(0.0..=LUMEN_MAX).contains(&self.lumen_mean) {
            return Err(Error::InvalidPhantom("intensity means out of range".into()));
        }
        let min_extent = self.extent().min();
        if min_extent < 8.0 * rmin {
            return Err(Error::InvalidPhantom(format!(
                "volume extent {min_extent:.1} mm too small for {rmin} mm vessels (need ≥ {:.1} mm)",
                8.0 * rmin
            )));
        }
        Ok(())
    }
}

/// Plausible label share range per branch.
pub const SHARE_RANGE: [f64; 2] = [0.05, 0.35];
const MAX_TREE_ATTEMPTS: u64 = 64;

/// Draws a deterministic five-branch portal tree for `spec.seed`.
pub fn generate_tree(spec: &PhantomSpec) -> Result<VesselTree> {
    spec.validate()?;
    let mut last = None;
    for attempt in 0..MAX_TREE_ATTEMPTS {
        let mut rng = rng::stream(spec.seed, streams::PHANTOM, attempt);
        let tree = draw_tree(spec, &mut rng);
        tree.validate()?;
        let shares = estimated_shares(&tree);
        // narrower than SHARE_RANGE: the estimate ignores overlaps and clipping
        if shares.iter().all(|&s| (0.065..=0.31).contains(&s)) {
            return Ok(tree);
        }
        last = Some(shares);
    }
    Err(Error::InvalidPhantom(format!(
        "no tree with plausible branch shares after {MAX_TREE_ATTEMPTS} draws (last {last:?})"
    )))
}

fn estimated_shares(tree: &VesselTree) -> Vec<f64> {
    let vols: Vec<f64> = tree
        .branches
        .iter()
        .map(|b| {
            (1..b.centerline.len())
                .map(|s| {
                    let r = 0.5 * (b.radii[s - 1] + b.radii[s]);
                    std::f64::consts::PI * r * r * (b.vertex(s) - b.vertex(s - 1)).norm()
                })
                .sum::<f64>()
        })
        .collect();
    let total: f64 = vols.iter().sum();
    vols.iter().map(|v| v / total).collect()
}

fn jitter(rng: &mut rng::Rng, amp: f64) -> f64 {
    rng.random_range(-amp..=amp)
}

fn draw_tree(spec: &PhantomSpec, rng: &mut rng::Rng) -> VesselTree {
    let e = spec.extent();
    let [rmin, rmax] = spec.radius_range;
    let at = |f: [f64; 3]| Vector3::new(f[0] * e.x, f[1] * e.y, f[2] * e.z);
    let margin = |r: f64| r + 2.0 * spec.spacing;
    let clamp_inside = |p: Vector3<f64>, r: f64| {
        let m = margin(r);
        Vector3::new(p.x.clamp(m, e.x - m), p.y.clamp(m, e.y - m), p.z.clamp(m, e.z - m))
    };

    // main trunk: enters low-x, runs to the hilum near the centre
    let r_mpv = rng.random_range((rmin + 0.55 * (rmax - rmin))..=rmax);
    let mut mpv_pts = vec![
        at([0.06, 0.55 + jitter(rng, 0.05), 0.5 + jitter(rng, 0.06)]),
        at([0.3 + jitter(rng, 0.03), 0.52 + jitter(rng, 0.05), 0.5 + jitter(rng, 0.06)]),
        at([0.52 + jitter(rng, 0.04), 0.48 + jitter(rng, 0.05), 0.5 + jitter(rng, 0.05)]),
    ];
    for p in mpv_pts.iter_mut() {
        *p = clamp_inside(*p, r_mpv);
    }
    let mpv = Branch {
        id: BranchId::Mpv,
        parent: None,
        radii: vec![r_mpv, r_mpv * 0.95, r_mpv * 0.9],
        centerline: mpv_pts.iter().map(|p| [p.x, p.y, p.z]).collect(),
    };

    // left branches leave from the middle of the trunk, right branches from the hilum
    let t_left = rng.random_range(0.55..0.8);
    let left_origin = mpv_pts[0] + (mpv_pts[1] - mpv_pts[0]) * t_left;
    let right_origin = mpv_pts[2];
    let children = [
        (BranchId::Rlpv, right_origin, Vector3::new(1.0, 0.25, -1.0)),
        (BranchId::Rmpv, right_origin, Vector3::new(0.9, -0.35, 1.0)),
        (BranchId::Lmpv, left_origin, Vector3::new(0.25, -0.45, 1.0)),
        (BranchId::Llpv, left_origin, Vector3::new(0.15, 0.45, -1.0)),
    ];
    let mut branches = vec![mpv];
    for (id, origin, dir) in children {
        let r0 = rng.random_range(rmin..=(rmin + 0.7 * (rmax - rmin)));
        let r_end = (r0 * 0.85).max(rmin);
        let mut d = (dir + Vector3::new(jitter(rng, 0.2), jitter(rng, 0.2), jitter(rng, 0.2))).normalize();
        let length = rng.random_range(0.42..0.55) * e.min();
        let n_seg = 3;
        let mut pts = vec![origin];
        let mut radii = vec![r0];
        for s in 1..=n_seg {
            // gentle bends keep every planar cut of a branch compact
            let bend = Vector3::new(jitter(rng, 0.15), jitter(rng, 0.15), jitter(rng, 0.15));
            d = (d + bend).normalize();
            let r = r0 + (r_end - r0) * s as f64 / n_seg as f64;
            let next = clamp_inside(pts[s - 1] + d * (length / n_seg as f64), r);
            pts.push(next);
            radii.push(r);
        }
        branches.push(Branch {
            id,
            parent: Some(BranchId::Mpv),
            centerline: pts.iter().map(|p| [p.x, p.y, p.z]).collect(),
            radii,
        });
    }

    let [nmin, nmax] = spec.small_vessel_count;
    let n_small = if nmax > nmin { rng.random_range(nmin..=nmax) } else { nmin };
    let small_vessels = (0..n_small)
        .map(|_| {
            let a = at([rng.random_range(0.05..0.95), rng.random_range(0.1..0.95), rng.random_range(0.05..0.95)]);
            let dir = Vector3::new(jitter(rng, 1.0), jitter(rng, 0.5), jitter(rng, 1.0))
                .try_normalize(1e-9)
                .unwrap_or_else(Vector3::x);
            let b = a + dir * rng.random_range(0.15..0.35) * e.min();
            SmallVessel {
                a: [a.x, a.y, a.z],
                b: [b.x, b.y, b.z],
                radius: rng.random_range(0.5..=0.95),
            }
        })
        .collect();

    VesselTree {
        branches,
        small_vessels,
    }
}

/// Labeled phantom volumes on a shared grid.
#[derive(Clone, Debug)]
pub struct Phantom {
    pub labels: Volume<u8>,
    pub intensity: Volume<f32>,
}

/// Rasterises the tree into a label volume and a speckled intensity volume.
///
/// A voxel takes the id of the enclosing tube whose centreline is nearest;
/// exact ties go to the smaller id.
pub fn rasterize(tree: &VesselTree, spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let grid = spec.grid();
    let n = grid.len();
    let h = spec.spacing;

    // (distance to centreline, id) of the best enclosing tube
    let mut best: Vec<(f64, u8)> = vec![(f64::INFINITY, 0); n];
    // distance beyond the tube wall, for the partial-volume rim; 0 inside
    let mut wall: Vec<f64> = vec![f64::INFINITY; n];

    let mut stamp = |a: Vector3<f64>, b: Vector3<f64>, ra: f64, rb: f64, id: u8| {
        let reach = ra.max(rb) + h;
        let lo = a.inf(&b).add_scalar(-reach);
        let hi = a.sup(&b).add_scalar(reach);
        let range = |axis: usize| {
            let l = ((lo[axis] / h).floor().max(0.0)) as usize;
            let u = ((hi[axis] / h).ceil() as usize).min(grid.dims[axis] - 1);
            l..=u
        };
        for k in range(2) {
            for j in range(1) {
                for i in range(0) {
                    let p = grid.voxel_center(i, j, k);
                    let (d, r) = segment_distance(&p, &a, &b, ra, rb);
                    let idx = grid.linear(i, j, k);
                    let outside = (d - r).max(0.0);
                    if outside < wall[idx] {
                        wall[idx] = outside;
                    }
                    if id != 0 && d <= r {
                        let cur = best[idx];
                        if d < cur.0 || (d == cur.0 && id < cur.1) {
                            best[idx] = (d, id);
                        }
                    }
                }
            }
        }
    };

    for b in &tree.branches {
        for s in 1..b.centerline.len() {
            stamp(b.vertex(s - 1), b.vertex(s), b.radii[s - 1], b.radii[s], b.id.as_u8());
        }
    }
    for v in &tree.small_vessels {
        stamp(Vector3::from(v.a), Vector3::from(v.b), v.radius, v.radius, 0);
    }

    let labels = Volume::from_vec(grid, best.iter().map(|&(_, id)| id).collect())?;
    let speckle = speckle_field(spec)?;
    let intensity: Vec<f32> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let [_, j, _] = grid.unlinear(idx);
            let s = speckle[idx];
            let lumen = (spec.lumen_mean * s).min(LUMEN_MAX);
            let tissue = spec.parenchyma_mean * s;
            let alpha = (1.0 - wall[idx] / h).clamp(0.0, 1.0) as f32;
            let atten = (-spec.attenuation_per_mm * j as f64 * h).exp() as f32;
            let v = if wall[idx] == 0.0 {
                lumen
            } else {
                alpha * lumen + (1.0 - alpha) * tissue
            };
            (v * atten).clamp(0.0, 1.0)
        })
        .collect();
    let intensity = Volume::from_vec(grid, intensity)?;
    Ok(Phantom { labels, intensity })
}

/// Mean-one log-normal multiplicative speckle with Gaussian spatial correlation.
fn speckle_field(spec: &PhantomSpec) -> Result<Vec<f32>> {
    let grid = spec.grid();
    let mut rng = rng::stream(spec.seed, streams::SPECKLE, 0);
    let mut field: Vec<f64> = (0..grid.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let kernel = gaussian_kernel(spec.speckle_correlation);
    // white noise blurred by a normalised kernel has variance (Σw²)³
    let norm = kernel.iter().map(|w| w * w).sum::<f64>().powf(1.5);
    for axis in 0..3 {
        blur_axis(&mut field, &grid.dims, axis, &kernel);
    }
    let sigma = spec.speckle_sigma;
    Ok(field
        .par_iter()
        .map(|&g| (sigma * g / norm - 0.5 * sigma * sigma).exp() as f32)
        .collect())
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let w: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable 1D convolution along `axis` with clamped borders.
fn blur_axis(data: &mut [f64], dims: &[usize; 3], axis: usize, kernel: &[f64]) {
    let r = (kernel.len() / 2) as i64;
    let n = dims[axis];
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let lines: Vec<usize> = (0..data.len())
        .filter(|&idx| (idx / stride) % n == 0)
        .collect();
    let src = data.to_vec();
    let results: Vec<(usize, Vec<f64>)> = lines
        .par_iter()
        .map(|&start| {
            let line: Vec<f64> = (0..n)
                .map(|t| {
                    kernel
                        .iter()
                        .enumerate()
                        .map(|(o, w)| {
                            let s = (t as i64 + o as i64 - r).clamp(0, n as i64 - 1) as usize;
                            w * src[start + s * stride]
                        })
                        .sum()
                })
                .collect();
            (start, line)
        })
        .collect();
    for (start, line) in results {
        for (t, v) in line.into_iter().enumerate() {
            data[start + t * stride] = v;
        }
    }
}

/// One tracked 2D acquisition.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackedFrame {
    /// Seconds since the start of the sequence.
    pub timestamp: f64,
    /// Tracked sensor pose; the image pose is `pose ∘ calibration`.
    pub pose: Pose,
    pub image: GrayImage,
}

/// A tracked sequence: frames sharing one image geometry and calibration.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackedSequence {
    pub geometry: ImageGeometry,
    /// Fixed image-to-sensor transform.
    pub calibration: Pose,
    pub frames: Vec<TrackedFrame>,
}

impl TrackedSequence {
    /// Image-plane pose of frame `i` in world space.
    pub fn image_pose(&self, i: usize) -> Pose {
        self.frames[i].pose.compose(&self.calibration)
    }

    pub fn image_poses(&self) -> Vec<Pose> {
        (0..self.frames.len()).map(|i| self.image_pose(i)).collect()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Acquisition settings for [`simulate_sweep`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepNoise {
    /// Log-normal sigma of per-pixel multiplicative speckle; 0 disables noise.
    pub sigma: f64,
    pub seed: u64,
    pub frame_rate: f64,
}

impl Default for SweepNoise {
    fn default() -> Self {
        Self {
            sigma: 0.02,
            seed: 0,
            frame_rate: 15.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Sweep {
    pub sequence: TrackedSequence,
    /// Indices of frames whose plane never intersected the volume.
    pub outside: Vec<usize>,
}

/// Samples the intensity volume on each image-plane pose in `trajectory`
/// (cubic interpolation) and applies independent per-frame speckle.
pub fn simulate_sweep(
    intensity: &Volume<f32>,
    trajectory: &[Pose],
    g: &ImageGeometry,
    calibration: Pose,
    noise: &SweepNoise,
) -> Sweep {
    let cal_inv = calibration.inverse();
    let frames: Vec<(TrackedFrame, bool)> = trajectory
        .par_iter()
        .enumerate()
        .map(|(i, pose)| {
            let (mut image, inside) = sample_frame(intensity, pose, g);
            if noise.sigma > 0.0 {
                let mut rng = rng::stream(noise.seed, streams::SWEEP, i as u64);
                let s = noise.sigma;
                for v in image.data_mut() {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    *v = (*v as f64 * (s * n - 0.5 * s * s).exp()).clamp(0.0, 1.0) as f32;
                }
            }
            let frame = TrackedFrame {
                timestamp: i as f64 / noise.frame_rate,
                pose: pose.compose(&cal_inv),
                image,
            };
            (frame, inside == 0)
        })
        .collect();
    let outside = frames
        .iter()
        .enumerate()
        .filter_map(|(i, (_, out))| out.then_some(i))
        .collect();
    Sweep {
        sequence: TrackedSequence {
            geometry: *g,
            calibration,
            frames: frames.into_iter().map(|(f, _)| f).collect(),
        },
        outside,
    }
}

/// Cubic plane sample; pixels outside the volume are 0. Returns the number
/// of pixels that landed inside.
pub fn sample_frame(vol: &Volume<f32>, pose: &Pose, g: &ImageGeometry) -> (GrayImage, usize) {
    let grid = vol.grid();
    let origin = grid.world_to_index(&pose.transform_point(&Vector3::zeros()));
    let du = grid.world_to_index(&pose.transform_point(&Vector3::new(g.spacing, 0.0, 0.0))) - origin;
    let dv = grid.world_to_index(&pose.transform_point(&Vector3::new(0.0, g.spacing, 0.0))) - origin;
    let mut inside = 0;
    let mut img = GrayImage::filled(g.width, g.height, 0.0);
    for v in 0..g.height {
        for u in 0..g.width {
            let idx = origin + du * u as f64 + dv * v as f64;
            if let Some(s) = interp::sample(vol, &idx, Interpolation::Cubic) {
                img.set(u, v, s.clamp(0.0, 1.0));
                inside += 1;
            }
        }
    }
    (img, inside)
}

/// Freehand-like sweep description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    /// Distance between consecutive frames along the sweep axis, mm.
    pub pitch: f64,
    /// Std-dev of the lateral/axial hand wobble, mm.
    pub wobble_mm: f64,
    /// Std-dev of the tilt/rock/rotation hand wobble, degrees.
    pub wobble_deg: f64,
    pub seed: u64,
}

impl Default for SweepPlan {
    fn default() -> Self {
        Self {
            pitch: 0.5,
            wobble_mm: 0.3,
            wobble_deg: 1.0,
            seed: 0,
        }
    }
}

impl SweepPlan {
    /// Perfectly steady sweep: no hand wobble.
    pub fn straight(pitch: f64) -> Self {
        Self {
            pitch,
            wobble_mm: 0.0,
            wobble_deg: 0.0,
            seed: 0,
        }
    }
}

/// Transverse sweep along the grid z axis with the probe face on the y = 0
/// surface, frames centred laterally. Wobble is smooth (AR(1)) so
/// neighbouring frames stay coherent.
pub fn transverse_sweep(grid: &Grid, g: &ImageGeometry, plan: &SweepPlan) -> Vec<Pose> {
    let half_w = (g.width as f64 - 1.0) * 0.5 * g.spacing;
    let center = grid.center();
    let top = grid.voxel_center(0, 0, 0);
    let z_len = (grid.dims[2] - 1) as f64 * grid.spacing[2];
    let n = (z_len / plan.pitch).floor() as usize + 1;
    let mut rng = rng::stream(plan.seed, streams::SWEEP, u64::MAX);
    let mut state = [0.0f64; 5];
    (0..n)
        .map(|i| {
            for s in state.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *s = 0.9 * *s + (1.0f64 - 0.81).sqrt() * e;
            }
            let z = top.z + i as f64 * plan.pitch;
            let t = Vector3::new(
                center.x - half_w + state[0] * plan.wobble_mm,
                top.y + state[1].abs() * plan.wobble_mm,
                z,
            );
            let (tilt, rock, rot) = (
                (state[2] * plan.wobble_deg).to_radians(),
                (state[3] * plan.wobble_deg).to_radians(),
                (state[4] * plan.wobble_deg).to_radians(),
            );
            // pivot the wobble about the image centre
            let c = g.center_local();
            Pose::from_translation(t)
                .compose(&Pose::from_translation(c))
                .compose(&Pose::rot_x(tilt))
                .compose(&Pose::rot_y(rock))
                .compose(&Pose::rot_z(rot))
                .compose(&Pose::from_translation(-c))
        })
        .collect()
}

/// Label share of each labeled branch, in `BranchId::LABELED` order.
pub fn label_shares(labels: &Volume<u8>) -> [f64; 5] {
    let mut counts = [0usize; 6];
    for &l in labels.data() {
        counts[l as usize] += 1;
    }
    let total: usize = counts[1..].iter().sum();
    std::array::from_fn(|i| counts[i + 1] as f64 / total.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> PhantomSpec {
        PhantomSpec {
            dims: [64, 64, 48],
            spacing: 1.0,
            ..PhantomSpec::default()
        }
    }

    #[test]
    fn tree_is_deterministic_and_valid() {
        let spec = PhantomSpec::default().with_seed(7);
        let a = generate_tree(&spec).unwrap();
        let b = generate_tree(&spec).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_ne!(a, generate_tree(&spec.clone().with_seed(8)).unwrap());
    }

    #[test]
    fn radii_respect_range() {
        let spec = PhantomSpec {
            radius_range: [2.5, 5.0],
            ..small_spec()
        };
        for seed in 0..5 {
            let tree = generate_tree(&spec.clone().with_seed(seed)).unwrap();
            for b in &tree.branches {
                assert!(b.radii.iter().all(|&r| (2.5..=5.0).contains(&r)), "{:?}", b.radii);
            }
        }
    }

    #[test]
    fn rejects_small_or_invalid_specs() {
        let tiny = PhantomSpec {
            dims: [32, 32, 32],
            ..PhantomSpec::default()
        };
        assert!(matches!(generate_tree(&tiny), Err(Error::InvalidPhantom(_))));
        let thin = PhantomSpec {
            radius_range: [1.5, 3.0],
            ..PhantomSpec::default()
        };
        assert!(generate_tree(&thin).is_err());
        let flat = PhantomSpec {
            dims: [64, 64, 16],
            ..PhantomSpec::default()
        };
        assert!(generate_tree(&flat).is_err());
    }

    #[test]
    fn rasterized_labels_contain_centrelines() {
        let spec = small_spec().with_seed(3);
        let tree = generate_tree(&spec).unwrap();
        let ph = rasterize(&tree, &spec).unwrap();
        let grid = ph.labels.grid();
        let mpv = tree.branch(BranchId::Mpv).unwrap();
        // the voxel nearest an MPV vertex away from the hilum is MPV
        for v in &mpv.centerline[..2] {
            let idx = grid.world_to_index(&Vector3::from(*v)).map(|c| c.round() as usize);
            assert_eq!(ph.labels.get(idx.x, idx.y, idx.z), 1);
        }
        // far from every centreline → background
        for (idx, &l) in ph.labels.data().iter().enumerate() {
            let [i, j, k] = grid.unlinear(idx);
            let p = grid.voxel_center(i, j, k);
            let far = tree
                .branches
                .iter()
                .all(|b| {
                    let (d, r) = b.distance(&p);
                    d > r + spec.spacing
                });
            if far {
                assert_eq!(l, 0);
            }
        }
        for id in BranchId::LABELED {
            assert!(ph.labels.data().iter().any(|&l| l == id.as_u8()), "{id} empty");
        }
    }

    #[test]
    fn lumen_darker_than_parenchyma() {
        let spec = small_spec().with_seed(1);
        let tree = generate_tree(&spec).unwrap();
        let ph = rasterize(&tree, &spec).unwrap();
        let (mut lumen, mut nl, mut tissue, mut nt) = (0.0, 0usize, 0.0, 0usize);
        for (&l, &v) in ph.labels.data().iter().zip(ph.intensity.data()) {
            assert!((0.0..=1.0).contains(&v));
            if l > 0 {
                assert!(v <= LUMEN_MAX);
                lumen += v as f64;
                nl += 1;
            } else {
                tissue += v as f64;
                nt += 1;
            }
        }
        let (lumen, tissue) = (lumen / nl as f64, tissue / nt as f64);
        assert!(lumen < tissue - 0.2, "lumen {lumen} tissue {tissue}");
    }

    #[test]
    fn sweep_counts_and_consistency() {
        let spec = small_spec().with_seed(2);
        let ph = rasterize(&generate_tree(&spec).unwrap(), &spec).unwrap();
        let g = ImageGeometry::new(64, 64, 1.0).unwrap();
        let traj = transverse_sweep(ph.intensity.grid(), &g, &SweepPlan { pitch: 1.0, ..Default::default() });
        assert_eq!(traj.len(), 48);
        let quiet = SweepNoise { sigma: 0.0, ..Default::default() };
        let sweep = simulate_sweep(&ph.intensity, &traj, &g, Pose::identity(), &quiet);
        assert_eq!(sweep.sequence.len(), traj.len());
        assert!(sweep.outside.is_empty());
        for (i, pose) in traj.iter().enumerate().step_by(7) {
            let (again, _) = sample_frame(&ph.intensity, pose, &g);
            assert!(sweep.sequence.frames[i].image.mae(&again).unwrap() < 1e-6);
        }
        // a plane far away is flagged and all zero
        let away = Pose::from_translation(Vector3::new(0.0, 0.0, 500.0));
        let s = simulate_sweep(&ph.intensity, &[away], &g, Pose::identity(), &quiet);
        assert_eq!(s.outside, vec![0]);
        assert!(s.sequence.frames[0].image.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn calibration_is_folded_into_image_pose() {
        let spec = small_spec();
        let ph = rasterize(&generate_tree(&spec).unwrap(), &spec).unwrap();
        let g = ImageGeometry::new(32, 32, 1.0).unwrap();
        let cal = Pose::from_translation(Vector3::new(2.0, -1.0, 0.5)).compose(&Pose::rot_z(0.1));
        let traj = vec![Pose::from_translation(Vector3::new(10.0, 5.0, 20.0))];
        let s = simulate_sweep(&ph.intensity, &traj, &g, cal, &SweepNoise::default());
        assert!(s.sequence.image_pose(0).approx_eq(&traj[0], 1e-12, 1e-12));
    }

    #[test]
    fn parallel_sweep_leaves_no_gaps() {
        let grid = Grid::new([40, 40, 30], 0.5, [0.0; 3]);
        let g = ImageGeometry::new(40, 40, 0.5).unwrap();
        let traj = transverse_sweep(&grid, &g, &SweepPlan::straight(0.5));
        let z: Vec<f64> = traj.iter().map(|p| p.translation().z).collect();
        let mut worst: f64 = 0.0;
        for idx in 0..grid.len() {
            let [i, j, k] = grid.unlinear(idx);
            let p = grid.voxel_center(i, j, k);
            // frames are axis-aligned here and span the full cross-section
            let d = z.iter().map(|z| (p.z - z).abs()).fold(f64::INFINITY, f64::min);
            worst = worst.max(d);
        }
        assert!(worst <= 0.5, "{worst}");
    }
}
