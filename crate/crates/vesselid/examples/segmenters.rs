//! Runs the two training-free segmenters on held-out frames and scores them
//! against the projected ground truth: the Frangi-style vesselness filter and
//! the SSIM nearest neighbour over an augmented dataset.
//!
//! cargo run --example segmenters -- [dataset-size]

use vesselid::core::evaluation::Segmenter;
use vesselid::core::pipeline::run;
use vesselid::core::preset::Preset;
use vesselid::core::reslice::DatasetGenerator;
use vesselid::seg::brute_force::{BruteForceSegmenter, SsimIndex};
use vesselid::seg::vesselness::VesselnessSegmenter;
use vesselid::stages::{score, test_frames, RunConfig};

fn main() -> anyhow::Result<()> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(500);
    let mut cfg = RunConfig::new(Preset::Desk, 1);
    cfg.evaluation.frames = 20;

    let (phantom, _, lab) = run(&cfg.pipeline)?;
    let frames = test_frames(&cfg, &phantom)?;
    let mut ds = cfg.pipeline.dataset.clone();
    ds.count = n;
    let samples = DatasetGenerator::new(&lab.reconstruction.volume, &lab.labels, ds)?.samples(0..n)?;
    let index = SsimIndex::build(samples.iter().map(|s| (&s.image, &s.mask)))?;

    let segs: Vec<Box<dyn Segmenter>> = vec![
        Box::new(VesselnessSegmenter { config: cfg.vesselness.clone() }),
        Box::new(BruteForceSegmenter { index }),
    ];
    for seg in &segs {
        let r = score(seg.as_ref(), &frames, &phantom.labels, cfg.evaluation.tolerance_mm)?;
        println!("== {} ({} frames) ==", r.segmenter, frames.len());
        println!("{}", r.dice.to_table());
        println!("{}", r.throughput.to_table());
    }
    Ok(())
}
