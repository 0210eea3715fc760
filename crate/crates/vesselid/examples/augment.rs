//! Reslices the reconstruction along randomised probe maneuvers and writes an
//! annotated dataset.
//!
//! cargo run --example augment -- [count] [out-dir]

use std::path::PathBuf;

use vesselid::core::io;
use vesselid::core::pipeline::{run, PipelineSpec};
use vesselid::core::preset::Preset;
use vesselid::core::reslice::DatasetGenerator;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(200);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "dataset-out".into()));

    let spec = PipelineSpec::new(Preset::Desk, 1);
    let (_, _, lab) = run(&spec)?;
    let mut ds = spec.dataset.clone();
    ds.count = count;
    println!("maneuver ranges: {:#?}", ds.ranges);

    let gen = DatasetGenerator::new(&lab.reconstruction.volume, &lab.labels, ds)?;
    let (manifest, stats) = io::write_dataset(&out, &gen, 256)?;
    println!(
        "{} samples of {}x{} in {:.2} s ({:.0}/s), {:.1}% labeled pixels, {:.2} draws per sample",
        manifest.samples.len(),
        manifest.geometry.width,
        manifest.geometry.height,
        stats.seconds,
        stats.samples_per_second,
        100.0 * stats.labeled_fraction,
        stats.mean_attempts
    );
    let first = &manifest.samples[0];
    println!("sample 0: {} / {} with {:?}", first.image, first.mask, first.params);
    Ok(())
}
