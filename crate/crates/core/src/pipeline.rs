//! End-to-end composition of the acquisition side: phantom, tracked sweep,
//! reconstruction with projected ground-truth labels, and the augmentation
//! dataset spec. Every stage is a pure function of the spec.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::{ImageGeometry, PlaneMapping, Pose};
use crate::phantom::{
    generate_tree, rasterize, simulate_sweep, transverse_sweep, BranchId, Phantom, PhantomSpec, Sweep, SweepNoise,
    SweepPlan, TrackedSequence, VesselTree,
};
use crate::preset::Preset;
use crate::reconstruction::{compound_labels, reconstruct, ReconSpec, Reconstruction};
use crate::reslice::{resample_labels, DatasetSpec};
use crate::rng;
use crate::volume::Volume;
use crate::Result;

/// Probe-to-sensor offset used when none is supplied, mm.
pub const DEFAULT_CALIBRATION_MM: [f64; 3] = [1.0, 2.0, 3.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub preset: Preset,
    pub seed: u64,
    pub phantom: PhantomSpec,
    pub frame: ImageGeometry,
    pub sweep: SweepPlan,
    pub noise: SweepNoise,
    pub calibration: Pose,
    pub recon: ReconSpec,
    pub dataset: DatasetSpec,
}

impl PipelineSpec {
    pub fn new(preset: Preset, seed: u64) -> Self {
        let phantom = preset.phantom().with_seed(seed);
        let frame = preset.frame();
        let recon = match preset {
            Preset::Paper => ReconSpec::paper(),
            Preset::Desk => ReconSpec::on_grid(phantom.grid()),
        };
        Self {
            preset,
            seed,
            frame,
            sweep: SweepPlan {
                seed: rng::derive(seed, rng::streams::SWEEP, 0),
                ..SweepPlan::default()
            },
            noise: SweepNoise {
                seed: rng::derive(seed, rng::streams::SWEEP, 1),
                ..SweepNoise::default()
            },
            calibration: Pose::from_translation(Vector3::from(DEFAULT_CALIBRATION_MM)),
            recon,
            dataset: DatasetSpec::new(preset.dataset_size(), seed, frame, preset.crop()),
            phantom,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.phantom.validate()?;
        self.recon.validate()?;
        self.dataset.validate()
    }
}

pub fn build_phantom(spec: &PipelineSpec) -> Result<(VesselTree, Phantom)> {
    let tree = generate_tree(&spec.phantom)?;
    let phantom = rasterize(&tree, &spec.phantom)?;
    Ok((tree, phantom))
}

/// Freehand transverse sweep over the phantom.
pub fn acquire(spec: &PipelineSpec, phantom: &Phantom) -> Sweep {
    let traj = transverse_sweep(phantom.intensity.grid(), &spec.frame, &spec.sweep);
    simulate_sweep(&phantom.intensity, &traj, &spec.frame, spec.calibration, &spec.noise)
}

/// Ground-truth labels on the reconstruction grid, compounded from the
/// phantom labels projected onto every tracked frame.
pub fn project_labels(labels: &Volume<u8>, seq: &TrackedSequence, grid: crate::Grid) -> Volume<u8> {
    let g = seq.geometry;
    let masks: Vec<_> = (0..seq.len())
        .map(|i| {
            let m = PlaneMapping::new(seq.image_pose(i), &g);
            (resample_labels(labels, &m, g.width, g.height), m)
        })
        .collect();
    compound_labels(&masks, grid, BranchId::COUNT)
}

pub struct Labeled {
    pub reconstruction: Reconstruction,
    pub labels: Volume<u8>,
}

pub fn reconstruct_labeled(spec: &PipelineSpec, phantom_labels: &Volume<u8>, seq: &TrackedSequence) -> Result<Labeled> {
    let reconstruction = reconstruct(seq, &spec.recon)?;
    let labels = project_labels(phantom_labels, seq, *reconstruction.volume.grid());
    Ok(Labeled { reconstruction, labels })
}

/// Runs phantom → sweep → labeled reconstruction.
pub fn run(spec: &PipelineSpec) -> Result<(Phantom, Sweep, Labeled)> {
    spec.validate()?;
    let (_, phantom) = build_phantom(spec)?;
    let sweep = acquire(spec, &phantom);
    let labeled = reconstruct_labeled(spec, &phantom.labels, &sweep.sequence)?;
    Ok((phantom, sweep, labeled))
}
