//! One function per pipeline step. Each stage reads the artifacts of the
//! previous ones from a [`Layout`] and writes its own, so the CLI
//! subcommands are thin wrappers.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use vesselid_core::evaluation::{
    identify, measure, DiceReport, FramePrediction, IdentificationReport, OracleSegmenter, Segmenter,
    ThroughputReport,
};
use vesselid_core::image::{GrayImage, LabelImage};
use vesselid_core::io::{self, Compression, DatasetManifest};
use vesselid_core::phantom::{label_shares, simulate_sweep, transverse_sweep, BranchId, Phantom, SweepPlan, TrackedSequence, VesselTree};
use vesselid_core::pipeline::{self, PipelineSpec};
use vesselid_core::preset::Preset;
use vesselid_core::reconstruction::ReconStats;
use vesselid_core::reslice::{central_crop, crop_offset, resample_labels, sample_plane, DatasetGenerator, DatasetStats};
use vesselid_core::{rng, ImageGeometry, PlaneMapping, Pose, Volume};
use vesselid_seg::brute_force::{BruteForceSegmenter, SsimIndex};
use vesselid_seg::train::{prepare, TrainHooks};
use vesselid_seg::vesselness::{VesselnessConfig, VesselnessSegmenter};
use vesselid_seg::{ModelSegmenter, SegmenterConfig, TrainReport, UNetModel, Variant};

/// Seed stream for the held-out evaluation sweep.
pub const EVAL_STREAM: &str = "evaluate";
/// Samples per generation chunk when writing a dataset.
const DATASET_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Held-out frames scored per segmenter.
    pub frames: usize,
    /// 3D identification tolerance, mm.
    pub tolerance_mm: f64,
    /// Score the SSIM nearest-neighbour baseline (slow on large datasets).
    pub brute_force: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            frames: 40,
            tolerance_mm: 5.0,
            brute_force: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub frames: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { frames: 100 }
    }
}

/// Everything a run needs, derived from `(preset, seed)` and optionally
/// overridden by a JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub pipeline: PipelineSpec,
    pub segmenter: SegmenterConfig,
    pub vesselness: VesselnessConfig,
    pub evaluation: EvalConfig,
    pub bench: BenchConfig,
}

impl RunConfig {
    pub fn new(preset: Preset, seed: u64) -> Self {
        let mut segmenter = SegmenterConfig::default();
        let (w, h) = preset.model_input();
        segmenter.model.input_width = w;
        segmenter.model.input_height = h;
        segmenter.train.seed = seed;
        let evaluation = EvalConfig {
            frames: match preset {
                Preset::Desk => 40,
                Preset::Paper => 200,
            },
            ..EvalConfig::default()
        };
        Self {
            pipeline: PipelineSpec::new(preset, seed),
            segmenter,
            vesselness: VesselnessConfig::default(),
            evaluation,
            bench: BenchConfig::default(),
        }
    }

    pub fn preset(&self) -> Preset {
        self.pipeline.preset
    }

    pub fn seed(&self) -> u64 {
        self.pipeline.seed
    }

    /// Deep-merges `overrides` into this config. Objects merge key by key,
    /// anything else replaces.
    pub fn with_overrides(self, overrides: &Value) -> Result<Self> {
        let mut base = serde_json::to_value(&self)?;
        merge(&mut base, overrides);
        let cfg: Self = serde_json::from_value(base).context("config overrides do not match the run config schema")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.segmenter.validate()?;
        self.vesselness.validate()?;
        if self.evaluation.frames == 0 || self.bench.frames == 0 {
            bail!("evaluation.frames and bench.frames must be positive");
        }
        Ok(())
    }
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// Artifact locations under a run directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn phantom_dir(&self) -> PathBuf {
        self.root.join("phantom")
    }
    pub fn phantom_intensity(&self) -> PathBuf {
        self.phantom_dir().join("intensity.vol")
    }
    pub fn phantom_labels(&self) -> PathBuf {
        self.phantom_dir().join("labels.vol")
    }
    pub fn phantom_manifest(&self) -> PathBuf {
        self.phantom_dir().join("phantom.json")
    }
    pub fn sweep_file(&self) -> PathBuf {
        self.root.join("sweep").join("sweep.seq")
    }
    pub fn sweep_manifest(&self) -> PathBuf {
        self.root.join("sweep").join("sweep.json")
    }
    pub fn recon_dir(&self) -> PathBuf {
        self.root.join("recon")
    }
    pub fn recon_intensity(&self) -> PathBuf {
        self.recon_dir().join("intensity.vol")
    }
    pub fn recon_labels(&self) -> PathBuf {
        self.recon_dir().join("labels.vol")
    }
    pub fn recon_known(&self) -> PathBuf {
        self.recon_dir().join("known.vol")
    }
    pub fn recon_manifest(&self) -> PathBuf {
        self.recon_dir().join("recon.json")
    }
    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join("dataset")
    }
    pub fn model_file(&self) -> PathBuf {
        self.root.join("model").join("model.ckpt")
    }
    pub fn nan_dump(&self) -> PathBuf {
        self.root.join("model").join("last_finite.ckpt")
    }
    pub fn train_report(&self) -> PathBuf {
        self.root.join("model").join("train_report.json")
    }
    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }
}

fn need(path: &Path, producer: &str) -> Result<()> {
    if !path.exists() {
        bail!("{} not found; run `vesselid {producer}` first", path.display());
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhantomManifest {
    pub preset: Preset,
    pub seed: u64,
    pub dims: [usize; 3],
    pub spacing_mm: f64,
    pub branches: Vec<String>,
    /// Labeled-voxel share per branch, MPV..LLPV.
    pub label_shares: [f64; 5],
    pub intensity: String,
    pub labels: String,
    pub tree: VesselTree,
}

pub fn phantom(cfg: &RunConfig, layout: &Layout) -> Result<PhantomManifest> {
    let (tree, ph) = pipeline::build_phantom(&cfg.pipeline)?;
    io::write_volume(&layout.phantom_intensity(), &ph.intensity, Compression::None)?;
    io::write_volume(&layout.phantom_labels(), &ph.labels, Compression::Deflate)?;
    let grid = ph.labels.grid();
    let manifest = PhantomManifest {
        preset: cfg.preset(),
        seed: cfg.seed(),
        dims: grid.dims,
        spacing_mm: grid.spacing[0],
        branches: BranchId::ALL.iter().map(|b| b.name().to_string()).collect(),
        label_shares: label_shares(&ph.labels),
        intensity: "intensity.vol".into(),
        labels: "labels.vol".into(),
        tree,
    };
    io::write_json(&layout.phantom_manifest(), &manifest)?;
    Ok(manifest)
}

pub fn load_phantom(layout: &Layout) -> Result<Phantom> {
    need(&layout.phantom_labels(), "phantom")?;
    Ok(Phantom {
        intensity: io::read_volume(&layout.phantom_intensity())?,
        labels: io::read_volume(&layout.phantom_labels())?,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepManifest {
    pub frames: usize,
    pub outside_frames: Vec<usize>,
    pub geometry: ImageGeometry,
    pub calibration: Pose,
    pub plan: SweepPlan,
}

pub fn sweep(cfg: &RunConfig, layout: &Layout) -> Result<SweepManifest> {
    let ph = load_phantom(layout)?;
    let sw = pipeline::acquire(&cfg.pipeline, &ph);
    io::write_sequence(&layout.sweep_file(), &sw.sequence)?;
    let manifest = SweepManifest {
        frames: sw.sequence.len(),
        outside_frames: sw.outside,
        geometry: sw.sequence.geometry,
        calibration: sw.sequence.calibration,
        plan: cfg.pipeline.sweep.clone(),
    };
    io::write_json(&layout.sweep_manifest(), &manifest)?;
    Ok(manifest)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReconManifest {
    pub dims: [usize; 3],
    pub spacing_mm: f64,
    pub origin: [f64; 3],
    pub stats: ReconStats,
    /// Mean absolute intensity error against the phantom over known voxels,
    /// when both share a grid.
    pub mae_vs_phantom: Option<f64>,
    /// Label DICE against the phantom per branch over known voxels, when
    /// both share a grid.
    pub label_dice_vs_phantom: Option<Vec<f64>>,
    pub seconds: f64,
}

pub fn reconstruct(cfg: &RunConfig, layout: &Layout) -> Result<ReconManifest> {
    need(&layout.sweep_file(), "sweep")?;
    let ph = load_phantom(layout)?;
    let seq = io::read_sequence(&layout.sweep_file())?;
    let t0 = Instant::now();
    let lab = pipeline::reconstruct_labeled(&cfg.pipeline, &ph.labels, &seq)?;
    let seconds = t0.elapsed().as_secs_f64();
    let rec = &lab.reconstruction;
    io::write_volume(&layout.recon_intensity(), &rec.volume, Compression::None)?;
    io::write_volume(&layout.recon_labels(), &lab.labels, Compression::Deflate)?;
    io::write_volume(&layout.recon_known(), &rec.known, Compression::Deflate)?;
    let same_grid = rec.volume.grid() == ph.intensity.grid();
    let grid = rec.volume.grid();
    let manifest = ReconManifest {
        dims: grid.dims,
        spacing_mm: grid.spacing[0],
        origin: grid.origin,
        stats: rec.stats.clone(),
        mae_vs_phantom: same_grid.then(|| masked_mae(&rec.volume, &ph.intensity, &rec.known)),
        label_dice_vs_phantom: same_grid.then(|| label_dice(&lab.labels, &ph.labels, &rec.known)),
        seconds,
    };
    io::write_json(&layout.recon_manifest(), &manifest)?;
    Ok(manifest)
}

/// Mean |a − b| over voxels where `known` is set.
pub fn masked_mae(a: &Volume<f32>, b: &Volume<f32>, known: &Volume<u8>) -> f64 {
    let (mut sum, mut n) = (0.0f64, 0usize);
    for ((x, y), k) in a.data().iter().zip(b.data()).zip(known.data()) {
        if *k != 0 {
            sum += (x - y).abs() as f64;
            n += 1;
        }
    }
    sum / n.max(1) as f64
}

/// Per-branch volumetric DICE over voxels where `known` is set, MPV..LLPV.
/// A branch absent from both scores 1.
pub fn label_dice(pred: &Volume<u8>, truth: &Volume<u8>, known: &Volume<u8>) -> Vec<f64> {
    BranchId::LABELED
        .iter()
        .map(|b| {
            let id = b.as_u8();
            let (mut inter, mut total) = (0usize, 0usize);
            for ((p, t), k) in pred.data().iter().zip(truth.data()).zip(known.data()) {
                if *k == 0 {
                    continue;
                }
                inter += usize::from(*p == id && *t == id);
                total += usize::from(*p == id) + usize::from(*t == id);
            }
            if total == 0 {
                1.0
            } else {
                2.0 * inter as f64 / total as f64
            }
        })
        .collect()
}

pub struct Reconstructed {
    pub volume: Volume<f32>,
    pub labels: Volume<u8>,
}

pub fn load_reconstruction(layout: &Layout) -> Result<Reconstructed> {
    need(&layout.recon_intensity(), "reconstruct")?;
    Ok(Reconstructed {
        volume: io::read_volume(&layout.recon_intensity())?,
        labels: io::read_volume(&layout.recon_labels())?,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AugmentSummary {
    pub samples: usize,
    pub stats: DatasetStats,
    pub dir: PathBuf,
}

pub fn augment(cfg: &RunConfig, layout: &Layout, count: Option<usize>) -> Result<AugmentSummary> {
    let rec = load_reconstruction(layout)?;
    let mut spec = cfg.pipeline.dataset.clone();
    if let Some(n) = count {
        spec.count = n;
    }
    let gen = DatasetGenerator::new(&rec.volume, &rec.labels, spec)?;
    let dir = layout.dataset_dir();
    let (manifest, stats) = io::write_dataset(&dir, &gen, DATASET_CHUNK)?;
    Ok(AugmentSummary {
        samples: manifest.count,
        stats,
        dir,
    })
}

pub fn train(cfg: &RunConfig, layout: &Layout, on_epoch: Option<Box<dyn FnMut(&vesselid_seg::train::EpochStats) + '_>>) -> Result<TrainReport> {
    need(&layout.dataset_dir().join(io::MANIFEST_FILE), "augment")?;
    let (_, samples) = io::load_dataset(&layout.dataset_dir())?;
    let dims = (cfg.segmenter.model.input_width, cfg.segmenter.model.input_height);
    let prepared = prepare(&samples, dims);
    drop(samples);
    let hooks = TrainHooks {
        on_epoch,
        nan_dump: Some(layout.nan_dump()),
    };
    let (model, report) = vesselid_seg::train::train(&cfg.segmenter, &prepared, hooks)?;
    model.save(&layout.model_file(), &report.checkpoint_id)?;
    io::write_json(&layout.train_report(), &report)?;
    Ok(report)
}

/// Builds the segmenter named by `variant` from the run's artifacts.
pub fn load_segmenter(cfg: &RunConfig, layout: &Layout, variant: Variant) -> Result<Box<dyn Segmenter>> {
    Ok(match variant {
        Variant::AttentionUnet => {
            need(&layout.model_file(), "train")?;
            Box::new(ModelSegmenter::new(UNetModel::load(&layout.model_file())?))
        }
        Variant::Vesselness => Box::new(VesselnessSegmenter {
            config: cfg.vesselness.clone(),
        }),
        Variant::BruteForce => {
            need(&layout.dataset_dir().join(io::MANIFEST_FILE), "augment")?;
            let (_, samples) = io::load_dataset(&layout.dataset_dir())?;
            let index = SsimIndex::build(samples.iter().map(|s| (&s.image, &s.mask)))?;
            Box::new(BruteForceSegmenter { index })
        }
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InferSummary {
    pub segmenter: String,
    pub width: usize,
    pub height: usize,
    /// Pixel count per label 0..=5.
    pub label_counts: [usize; 6],
    pub output: PathBuf,
}

/// Segments one stored image and writes the label mask next to it.
pub fn infer(cfg: &RunConfig, layout: &Layout, input: &Path, output: &Path, variant: Variant) -> Result<InferSummary> {
    let image: GrayImage = io::read_image(input)?;
    let seg = load_segmenter(cfg, layout, variant)?;
    let spacing = cfg.pipeline.dataset.crop.spacing;
    let g = ImageGeometry::new(image.width(), image.height(), spacing)?;
    let pred = seg.predict(&image, &PlaneMapping::new(Pose::identity(), &g))?;
    let mask = pred.into_mask();
    io::write_image(output, &mask, spacing)?;
    let mut label_counts = [0usize; 6];
    for &l in mask.data() {
        label_counts[l as usize] += 1;
    }
    Ok(InferSummary {
        segmenter: seg.name().to_string(),
        width: mask.width(),
        height: mask.height(),
        label_counts,
        output: output.to_path_buf(),
    })
}

/// A held-out frame: cropped image, projected ground truth and its mapping.
#[derive(Clone, Debug)]
pub struct TestFrame {
    pub index: usize,
    pub image: GrayImage,
    pub truth: LabelImage,
    pub mapping: PlaneMapping,
}

/// A fresh wobbly sweep over the phantom with its own seeds, evenly
/// subsampled to `cfg.evaluation.frames` frames that intersect the volume.
pub fn test_frames(cfg: &RunConfig, ph: &Phantom) -> Result<Vec<TestFrame>> {
    let spec = &cfg.pipeline;
    let plan = SweepPlan {
        seed: rng::derive(spec.seed, EVAL_STREAM, 0),
        ..spec.sweep.clone()
    };
    let noise = vesselid_core::phantom::SweepNoise {
        seed: rng::derive(spec.seed, EVAL_STREAM, 1),
        ..spec.noise.clone()
    };
    let traj = transverse_sweep(ph.intensity.grid(), &spec.frame, &plan);
    let sw = simulate_sweep(&ph.intensity, &traj, &spec.frame, spec.calibration, &noise);
    let usable: Vec<usize> = (0..sw.sequence.len()).filter(|i| !sw.outside.contains(i)).collect();
    if usable.is_empty() {
        bail!("evaluation sweep never intersects the phantom");
    }
    let n = cfg.evaluation.frames.min(usable.len());
    let crop = spec.dataset.crop;
    (0..n)
        .map(|k| {
            let i = usable[k * usable.len() / n];
            crop_frame(&sw.sequence, i, &ph.labels, &crop)
        })
        .collect()
}

fn crop_frame(seq: &TrackedSequence, i: usize, labels: &Volume<u8>, crop: &ImageGeometry) -> Result<TestFrame> {
    let g = seq.geometry;
    let full = PlaneMapping::new(seq.image_pose(i), &g);
    let gt = resample_labels(labels, &full, g.width, g.height);
    let (image, truth) = central_crop(&seq.frames[i].image, &gt, crop)?;
    Ok(TestFrame {
        index: i,
        image,
        truth,
        mapping: full.cropped(crop_offset(g.width, crop.width), 0),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SegmenterEvaluation {
    pub segmenter: String,
    pub dice: DiceReport,
    pub identification: IdentificationReport,
    pub throughput: ThroughputReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub frames: usize,
    pub tolerance_mm: f64,
    pub results: Vec<SegmenterEvaluation>,
}

impl EvaluationReport {
    pub fn result(&self, name: &str) -> Option<&SegmenterEvaluation> {
        self.results.iter().find(|r| r.segmenter == name)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{} held-out frames, identification tolerance {} mm\n\n",
            self.frames, self.tolerance_mm
        );
        for r in &self.results {
            s += &format!("== {} ==\n{}\n{}\n{}\n", r.segmenter, r.dice.to_table(), r.identification.to_table(), r.throughput.to_table());
        }
        s
    }
}

/// Scores one segmenter on the held-out frames.
pub fn score(seg: &dyn Segmenter, frames: &[TestFrame], labels: &Volume<u8>, tolerance_mm: f64) -> Result<SegmenterEvaluation> {
    let mut masks = Vec::with_capacity(frames.len());
    let throughput = measure(seg.name(), frames.len(), |i| {
        masks.push(seg.predict(&frames[i].image, &frames[i].mapping)?.into_mask());
        Ok(())
    })?;
    let dice = DiceReport::from_masks(masks.iter().zip(frames).map(|(m, f)| (m, &f.truth)))?;
    let preds: Vec<FramePrediction> = masks
        .into_iter()
        .zip(frames)
        .map(|(mask, f)| FramePrediction { mask, mapping: f.mapping })
        .collect();
    let identification = identify(&preds, labels, tolerance_mm)?;
    Ok(SegmenterEvaluation {
        segmenter: seg.name().to_string(),
        dice,
        identification,
        throughput,
    })
}

/// Scores the oracle, vesselness, the trained model and (optionally) the
/// brute-force baseline on a held-out sweep of the phantom.
pub fn evaluate(cfg: &RunConfig, layout: &Layout) -> Result<EvaluationReport> {
    let ph = load_phantom(layout)?;
    let frames = test_frames(cfg, &ph)?;
    let tol = cfg.evaluation.tolerance_mm;
    let mut results = vec![score(&OracleSegmenter { labels: &ph.labels }, &frames, &ph.labels, tol)?];
    let mut variants = vec![Variant::Vesselness];
    if layout.model_file().exists() {
        variants.push(Variant::AttentionUnet);
    }
    if cfg.evaluation.brute_force && layout.dataset_dir().join(io::MANIFEST_FILE).exists() {
        variants.push(Variant::BruteForce);
    }
    for v in variants {
        let seg = load_segmenter(cfg, layout, v)?;
        results.push(score(seg.as_ref(), &frames, &ph.labels, tol)?);
    }
    let report = EvaluationReport {
        frames: frames.len(),
        tolerance_mm: tol,
        results,
    };
    io::write_json(&layout.reports_dir().join("evaluation.json"), &report)?;
    io::write_bytes(&layout.reports_dir().join("evaluation.txt"), report.to_table().as_bytes())?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchReport {
    pub width: usize,
    pub height: usize,
    pub threads: usize,
    pub reslice: ThroughputReport,
    pub inference: ThroughputReport,
    pub end_to_end: ThroughputReport,
}

impl BenchReport {
    pub fn to_table(&self) -> String {
        format!(
            "{}x{} frames, {} thread(s)\n{}{}{}",
            self.width,
            self.height,
            self.threads,
            self.reslice.to_table(),
            self.inference.to_table(),
            self.end_to_end.to_table()
        )
    }
}

/// Reslice geometry that lands directly on the model input: the preset's
/// crop depth spread over the model's rows.
pub fn model_geometry(cfg: &RunConfig, model: &UNetModel) -> Result<ImageGeometry> {
    let (w, h) = model.input_dims();
    let crop = cfg.pipeline.dataset.crop;
    let spacing = crop.height as f64 * crop.spacing / h as f64;
    Ok(ImageGeometry::new(w, h, spacing)?)
}

/// Times reslicing the reconstruction along a straight sweep plus model
/// inference, one frame at a time. Uses the trained checkpoint when present,
/// otherwise a freshly initialised model of the configured shape.
pub fn bench(cfg: &RunConfig, layout: &Layout) -> Result<BenchReport> {
    let rec = load_reconstruction(layout)?;
    let model = if layout.model_file().exists() {
        UNetModel::load(&layout.model_file())?
    } else {
        UNetModel::init(&cfg.segmenter.model, rng::derive(cfg.seed(), "model", 0))?
    };
    let g = model_geometry(cfg, &model)?;
    let poses = bench_poses(&rec.volume, &g);
    if poses.is_empty() {
        bail!("no benchmark plane intersects the reconstruction");
    }
    let n = cfg.bench.frames;
    let mut frames = Vec::with_capacity(n);
    let reslice = measure("reslice", n, |i| {
        frames.push(sample_plane(&rec.volume, &rec.labels, &poses[i % poses.len()], &g)?.0);
        Ok(())
    })?;
    let inference = measure("inference", n, |i| {
        model.predict(&frames[i]).map(|_| ()).map_err(Into::into)
    })?;
    let end_to_end = measure("reslice+inference", n, |i| {
        let (img, _) = sample_plane(&rec.volume, &rec.labels, &poses[i % poses.len()], &g)?;
        model.predict(&img).map(|_| ()).map_err(Into::into)
    })?;
    let (width, height) = model.input_dims();
    let report = BenchReport {
        width,
        height,
        threads: rayon::current_num_threads(),
        reslice,
        inference,
        end_to_end,
    };
    io::write_json(&layout.reports_dir().join("bench.json"), &report)?;
    io::write_bytes(&layout.reports_dir().join("bench.txt"), report.to_table().as_bytes())?;
    Ok(report)
}

/// Straight transverse planes of geometry `g`, centred laterally.
pub fn bench_poses(vol: &Volume<f32>, g: &ImageGeometry) -> Vec<Pose> {
    transverse_sweep(vol.grid(), g, &SweepPlan::straight(1.0))
}

pub fn read_manifest(layout: &Layout) -> Result<DatasetManifest> {
    Ok(io::read_manifest(&layout.dataset_dir())?)
}
